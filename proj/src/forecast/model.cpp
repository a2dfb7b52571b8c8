#include <cmath>
#include <stdexcept>

#include "drx/forecast.hpp"

namespace drx::forecast {

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {Variant::NoX, Variant::Ind,  Variant::FC,
                                         Variant::PE,  Variant::Att,  Variant::AttNoHOD,
                                         Variant::AttPE, Variant::UB};
  return v;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::NoX: return "NoX";
    case Variant::Ind: return "Ind";
    case Variant::FC: return "FC";
    case Variant::PE: return "PE";
    case Variant::Att: return "Att";
    case Variant::AttNoHOD: return "AttNoHOD";
    case Variant::AttPE: return "AttPE";
    case Variant::UB: return "UB";
  }
  throw std::logic_error("to_string: bad variant");
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : all_variants()) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown model variant: " + s);
}

void ModelDims::validate() const {
  if (lookback < 1 || horizon < 1 || d < 1 || d_prime < 1 || conv_filters < 1 ||
      conv_kernel < 1 || local_filters < 1 || calendar_embed < 1 ||
      tariff_embed < 1 || iqn_basis < 1)
    throw std::invalid_argument("ModelDims: all sizes must be positive");
  if (dilations.empty()) throw std::invalid_argument("ModelDims: no conv layers");
  for (int d : dilations) {
    if (d < 1) throw std::invalid_argument("ModelDims: dilation >= 1");
  }
  if (cwfc_units != horizon)
    throw std::invalid_argument("ModelDims: cwfc_units must equal horizon");
  if (head_units.size() != 3 || head_units.back() != 1)
    throw std::invalid_argument("ModelDims: head must be three layers ending in 1");
}

ModelDims ModelDims::toy() {
  ModelDims t;
  t.lookback = 8;
  t.horizon = 2;
  t.d = 3;
  t.d_prime = 4;
  t.conv_filters = 2;
  t.conv_kernel = 2;
  t.dilations = {1, 2, 4};
  t.cwfc_units = 2;
  t.local_filters = 3;
  t.calendar_embed = 2;
  t.tariff_embed = 3;
  t.head_units = {4, 3, 1};
  t.iqn_basis = 4;
  return t;
}

namespace {

struct VariantTraits {
  bool future_tariff = false;
  bool attention = false;
  bool hod_in_kv = false;
  bool hod_in_q = false;
  bool pe_query = false;   // permutation-equivariant Q feeding attention
  bool pe_context = false; // PE output used directly as context
  bool fc_context = false;
  bool ind_context = false;
  bool shift_indicator = false;
};

VariantTraits traits(Variant v) {
  VariantTraits t;
  switch (v) {
    case Variant::NoX:
      break;
    case Variant::Ind:
      t.future_tariff = t.ind_context = true;
      break;
    case Variant::FC:
      t.future_tariff = t.fc_context = true;
      break;
    case Variant::PE:
      t.future_tariff = t.pe_context = true;
      break;
    case Variant::Att:
      t.future_tariff = t.attention = t.hod_in_kv = t.hod_in_q = true;
      break;
    case Variant::AttNoHOD:
      t.future_tariff = t.attention = true;
      break;
    case Variant::AttPE:
      t.future_tariff = t.attention = t.hod_in_kv = t.pe_query = true;
      break;
    case Variant::UB:
      t.future_tariff = t.attention = t.hod_in_kv = t.pe_query = true;
      t.shift_indicator = true;
      break;
  }
  return t;
}

int context_width(Variant v, const ModelDims& dims) {
  const VariantTraits t = traits(v);
  if (t.attention) return dims.d;
  if (t.pe_context) return dims.d_prime;
  if (t.fc_context) return dims.d;
  if (t.ind_context) return dims.tariff_embed;
  return 0;
}

int fused_width(Variant v, const ModelDims& dims) {
  return dims.local_filters + context_width(v, dims) + 3 * dims.calendar_embed +
         (traits(v).shift_indicator ? 1 : 0);
}

void add_dense(ParameterStore& ps, const std::string& name, int in, int out,
               uint64_t seed) {
  ps.add(name + ".w", glorot_uniform({in, out}, in, out, name + ".w", seed));
  ps.add(name + ".b", Tensor::zeros({out}));
}

// One-hot embedding network: ReLU layer then linear, V categories -> E dims.
void add_embedding(ParameterStore& ps, const std::string& name, int cats, int dim,
                   uint64_t seed) {
  add_dense(ps, name + ".l1", cats, dim, seed);
  add_dense(ps, name + ".l2", dim, dim, seed);
}

Tensor dense(const ParameterStore& ps, const std::string& name, const Tensor& x) {
  return affine(x, ps.at(name + ".w"), ps.at(name + ".b"));
}

Tensor embedding_table(const ParameterStore& ps, const std::string& name, int cats) {
  Tensor id = Tensor::zeros({cats, cats});
  for (int i = 0; i < cats; ++i) id.values()[static_cast<size_t>(i) * cats + i] = 1.0;
  return dense(ps, name + ".l2", relu(dense(ps, name + ".l1", id)));
}

// Two-layer head used by f_Q / f_K / f_V.
Tensor qkv_net(const ParameterStore& ps, const std::string& name, const Tensor& x) {
  return dense(ps, name + ".l2", relu(dense(ps, name + ".l1", x)));
}

Tensor linear_nobias(const Tensor& x, const Tensor& w) {
  Tensor zero = Tensor::zeros({w.dim(1)});
  return affine(x, w, zero);
}

constexpr int kTariffCats = 3;
constexpr int kHodCats = 24;
constexpr int kDowCats = 7;
constexpr int kMonthCats = 12;

}  // namespace

ModelState assemble_model(Variant variant, const ModelDims& dims, uint64_t seed) {
  dims.validate();
  const VariantTraits t = traits(variant);

  ModelState m;
  m.variant = variant;
  m.dims = dims;
  m.seed = seed;
  ParameterStore& ps = m.params;

  add_embedding(ps, "embed.tariff", kTariffCats, dims.tariff_embed, seed);
  add_embedding(ps, "embed.hod", kHodCats, dims.calendar_embed, seed);
  add_embedding(ps, "embed.dow", kDowCats, dims.calendar_embed, seed);
  add_embedding(ps, "embed.month", kMonthCats, dims.calendar_embed, seed);

  // DCNN over [consumption, tariff embedding, calendar embeddings] channels.
  int cin = 1 + dims.tariff_embed + 3 * dims.calendar_embed;
  for (size_t i = 0; i < dims.dilations.size(); ++i) {
    const std::string name = "dcnn.conv" + std::to_string(i);
    const int fan_in = cin * dims.conv_kernel;
    const int fan_out = dims.conv_filters * dims.conv_kernel;
    ps.add(name + ".w", glorot_uniform({dims.conv_filters, cin, dims.conv_kernel},
                                       fan_in, fan_out, name + ".w", seed));
    ps.add(name + ".b", Tensor::zeros({dims.conv_filters}));
    Tensor gamma = Tensor::zeros({dims.conv_filters});
    for (double& v : gamma.values()) v = 1.0;
    ps.add("dcnn.bn" + std::to_string(i) + ".gamma", gamma);
    ps.add("dcnn.bn" + std::to_string(i) + ".beta", Tensor::zeros({dims.conv_filters}));
    m.bn.push_back(BatchNormState::init(dims.conv_filters));
    cin = dims.conv_filters;
  }
  ps.add("dcnn.cwfc.w",
         glorot_uniform({dims.conv_filters, dims.horizon, dims.lookback},
                        dims.lookback, dims.horizon, "dcnn.cwfc.w", seed));
  ps.add("dcnn.cwfc.b", Tensor::zeros({dims.conv_filters, dims.horizon}));
  ps.add("dcnn.local.w",
         glorot_uniform({dims.horizon, dims.local_filters, dims.conv_filters},
                        dims.conv_filters, dims.local_filters, "dcnn.local.w", seed));
  ps.add("dcnn.local.b", Tensor::zeros({dims.horizon, dims.local_filters}));

  if (t.attention) {
    const int kv_in = dims.tariff_embed + (t.hod_in_kv ? dims.calendar_embed : 0);
    add_dense(ps, "att.fk.l1", kv_in, dims.d, seed);
    add_dense(ps, "att.fk.l2", dims.d, dims.d, seed);
    add_dense(ps, "att.fv.l1", kv_in, dims.d, seed);
    add_dense(ps, "att.fv.l2", dims.d, dims.d, seed);
    if (!t.pe_query) {
      const int q_in = dims.tariff_embed + (t.hod_in_q ? dims.calendar_embed : 0);
      add_dense(ps, "att.fq.l1", q_in, dims.d, seed);
      add_dense(ps, "att.fq.l2", dims.d, dims.d, seed);
    }
  }
  if (t.pe_query || t.pe_context) {
    add_dense(ps, "pe.theta", dims.tariff_embed, dims.d, seed);
    ps.add("pe.lambda", glorot_uniform({dims.d, dims.d_prime}, dims.d, dims.d_prime,
                                       "pe.lambda", seed));
    ps.add("pe.gamma", glorot_uniform({dims.d, dims.d_prime}, dims.d, dims.d_prime,
                                      "pe.gamma", seed));
    if (t.pe_query) add_dense(ps, "pe.qproj", dims.d_prime, dims.d, seed);
  }
  if (t.fc_context)
    add_dense(ps, "fc", dims.horizon * dims.tariff_embed, dims.d, seed);

  const int fused = fused_width(variant, dims);
  add_dense(ps, "iqn", dims.iqn_basis, fused, seed);
  add_dense(ps, "head.l0", fused, dims.head_units[0], seed);
  add_dense(ps, "head.l1", dims.head_units[0], dims.head_units[1], seed);
  add_dense(ps, "head.l2", dims.head_units[1], dims.head_units[2], seed);
  return m;
}

ModelState ModelState::clone_values() const {
  ModelState out;
  out.variant = variant;
  out.dims = dims;
  out.seed = seed;
  for (const auto& [name, t] : params)
    out.params.add(name, Tensor::from_values(t.shape(), t.values()));
  out.bn = bn;
  return out;
}

void ModelState::assign_values(const ModelState& other) {
  for (auto& [name, t] : params) t.values() = other.params.at(name).values();
  bn = other.bn;
}

Tensor pe_query_net(const Tensor& x, const Tensor& lambda, const Tensor& gamma) {
  const bool batched = x.ndim() == 3;
  if (!batched && x.ndim() != 2)
    throw std::invalid_argument("pe_query_net: expected [H,d] or [B,H,d]");
  const int B = batched ? x.dim(0) : 1;
  const int H = batched ? x.dim(1) : x.dim(0);
  const int d = batched ? x.dim(2) : x.dim(1);
  const int dp = lambda.dim(1);
  Tensor x3 = batched ? x : reshape(x, {1, H, d});
  Tensor xl = reshape(linear_nobias(reshape(x3, {B * H, d}), lambda), {B, H, dp});
  Tensor pooled = maxpool_rows_grouped(x3);        // [B,d]
  Tensor mg = linear_nobias(pooled, gamma);        // [B,dp]
  Tensor out = sigmoid(sub_bcast_rows(xl, mg));
  return batched ? out : reshape(out, {H, dp});
}

Tensor model_forward(ModelState& model,
                     std::span<const ForecastWindow* const> batch,
                     std::span<const double> quantile_per_sample, bool train,
                     ForwardProbe* probe) {
  const ModelDims& dims = model.dims;
  const VariantTraits vt = traits(model.variant);
  const int B = static_cast<int>(batch.size());
  const int L = dims.lookback;
  const int H = dims.horizon;
  if (B < 1) throw std::invalid_argument("model_forward: empty batch");
  if (static_cast<int>(quantile_per_sample.size()) != B)
    throw std::invalid_argument("model_forward: one quantile per sample required");

  std::vector<int> p_rate, p_hod, p_dow, p_month, f_rate, f_hod, f_dow, f_month;
  p_rate.reserve(static_cast<size_t>(B) * L);
  Tensor cons_flat = Tensor::zeros({B * L, 1});
  Tensor indicator;
  if (vt.shift_indicator) indicator = Tensor::zeros({B * H, 1});
  for (int s = 0; s < B; ++s) {
    const ForecastWindow& w = *batch[static_cast<size_t>(s)];
    if (static_cast<int>(w.past_consumption.size()) != L ||
        static_cast<int>(w.target.size()) != H ||
        static_cast<int>(w.future_rate_level.size()) != H)
      throw std::invalid_argument("model_forward: window does not match model dims");
    if (vt.shift_indicator && static_cast<int>(w.future_shift_indicator.size()) != H)
      throw std::invalid_argument(
          "model_forward: UB variant requires a shift indicator in every window");
    for (int i = 0; i < L; ++i) {
      cons_flat.values()[static_cast<size_t>(s) * L + i] = w.past_consumption[i];
      p_rate.push_back(w.past_rate_level[i]);
      p_hod.push_back(w.past_hod[i]);
      p_dow.push_back(w.past_dow[i]);
      p_month.push_back(w.past_month[i]);
    }
    for (int h = 0; h < H; ++h) {
      f_rate.push_back(w.future_rate_level[h]);
      f_hod.push_back(w.future_hod[h]);
      f_dow.push_back(w.future_dow[h]);
      f_month.push_back(w.future_month[h]);
      if (vt.shift_indicator)
        indicator.values()[static_cast<size_t>(s) * H + h] = w.future_shift_indicator[h];
    }
  }

  const ParameterStore& ps = model.params;
  Tensor tariff_table = embedding_table(ps, "embed.tariff", kTariffCats);
  Tensor hod_table = embedding_table(ps, "embed.hod", kHodCats);
  Tensor dow_table = embedding_table(ps, "embed.dow", kDowCats);
  Tensor month_table = embedding_table(ps, "embed.month", kMonthCats);

  // History branch.
  Tensor x = concat_channels({rows_to_channels(cons_flat, B, L),
                              rows_to_channels(gather_rows(tariff_table, p_rate), B, L),
                              rows_to_channels(gather_rows(hod_table, p_hod), B, L),
                              rows_to_channels(gather_rows(dow_table, p_dow), B, L),
                              rows_to_channels(gather_rows(month_table, p_month), B, L)});
  for (size_t i = 0; i < dims.dilations.size(); ++i) {
    const std::string li = std::to_string(i);
    x = conv1d_causal(x, ps.at("dcnn.conv" + li + ".w"), ps.at("dcnn.conv" + li + ".b"),
                      dims.dilations[i]);
    x = batchnorm_nct(x, ps.at("dcnn.bn" + li + ".gamma"), ps.at("dcnn.bn" + li + ".beta"),
                      model.bn[i], train);
    x = relu(x);
  }
  Tensor cw = channelwise_dense(x, ps.at("dcnn.cwfc.w"), ps.at("dcnn.cwfc.b"));
  Tensor local = local_dense(cw, ps.at("dcnn.local.w"), ps.at("dcnn.local.b"));

  // Exogenous branch.
  Tensor fut_cal = concat_cols({gather_rows(hod_table, f_hod),
                                gather_rows(dow_table, f_dow),
                                gather_rows(month_table, f_month)});
  Tensor ctx_flat;
  if (vt.future_tariff) {
    Tensor tou = gather_rows(tariff_table, f_rate);  // [B*H, Et]
    if (vt.ind_context) {
      ctx_flat = tou;
    } else if (vt.fc_context) {
      Tensor c = dense(ps, "fc", reshape(tou, {B, H * dims.tariff_embed}));  // [B,d]
      Tensor ones = Tensor::zeros({B, H, dims.d});
      for (double& v : ones.values()) v = 1.0;
      ctx_flat = reshape(mul_bcast_rows(ones, c), {B * H, dims.d});
    } else {
      Tensor pe_out;  // [B,H,d']
      if (vt.pe_query || vt.pe_context) {
        Tensor pe_x = relu(dense(ps, "pe.theta", tou));  // [B*H, d]
        pe_out = pe_query_net(reshape(pe_x, {B, H, dims.d}), ps.at("pe.lambda"),
                              ps.at("pe.gamma"));
      }
      if (vt.pe_context) {
        ctx_flat = reshape(pe_out, {B * H, dims.d_prime});
        if (probe) probe->tariff_context = pe_out;
      } else {
        Tensor hod_f = gather_rows(hod_table, f_hod);
        Tensor kv_in = vt.hod_in_kv ? concat_cols({tou, hod_f}) : tou;
        Tensor K = reshape(qkv_net(ps, "att.fk", kv_in), {B, H, dims.d});
        Tensor V = reshape(qkv_net(ps, "att.fv", kv_in), {B, H, dims.d});
        Tensor Q;
        if (vt.pe_query) {
          Q = reshape(dense(ps, "pe.qproj", reshape(pe_out, {B * H, dims.d_prime})),
                      {B, H, dims.d});
        } else {
          Tensor q_in = vt.hod_in_q ? concat_cols({tou, hod_f}) : tou;
          Q = reshape(qkv_net(ps, "att.fq", q_in), {B, H, dims.d});
        }
        Tensor att = softmax_rows(scale(bmm_nt(Q, K), 1.0 / std::sqrt(dims.d)));
        Tensor ctx = bmm_nn(att, V);
        ctx_flat = reshape(ctx, {B * H, dims.d});
        if (probe) {
          probe->tariff_context = ctx;
          if (vt.pe_query) probe->pe_query = Q;
        }
      }
    }
    if (probe && vt.ind_context)
      probe->tariff_context = reshape(ctx_flat, {B, H, dims.tariff_embed});
    if (probe && vt.fc_context)
      probe->tariff_context = reshape(ctx_flat, {B, H, dims.d});
  }

  std::vector<Tensor> parts = {reshape(local, {B * H, dims.local_filters})};
  if (ctx_flat.defined()) parts.push_back(ctx_flat);
  parts.push_back(fut_cal);
  if (vt.shift_indicator) parts.push_back(indicator);
  Tensor fused = concat_cols(parts);
  const int F = fused.dim(1);

  // IQN: cosine-embedded quantile modulates the fused features.
  Tensor basis = Tensor::zeros({B, dims.iqn_basis});
  for (int s = 0; s < B; ++s) {
    const double q = quantile_per_sample[static_cast<size_t>(s)];
    for (int i = 0; i < dims.iqn_basis; ++i)
      basis.values()[static_cast<size_t>(s) * dims.iqn_basis + i] =
          std::cos(M_PI * i * q);
  }
  Tensor iqn_vec = relu(dense(ps, "iqn", basis));  // [B, F]
  Tensor modulated = reshape(mul_bcast_rows(reshape(fused, {B, H, F}), iqn_vec),
                             {B * H, F});

  Tensor h0 = relu(dense(ps, "head.l0", modulated));
  Tensor h1 = relu(dense(ps, "head.l1", h0));
  Tensor out = dense(ps, "head.l2", h1);
  return reshape(out, {B, H});
}

std::vector<std::vector<double>> predict(ModelState& model,
                                         const ForecastWindow& window,
                                         std::span<const double> quantiles,
                                         const Normalization& norm) {
  NoGradGuard ng;
  const int nq = static_cast<int>(quantiles.size());
  std::vector<const ForecastWindow*> batch(static_cast<size_t>(nq), &window);
  Tensor out = model_forward(model, batch, quantiles, false);
  std::vector<std::vector<double>> result(
      static_cast<size_t>(model.dims.horizon), std::vector<double>(static_cast<size_t>(nq)));
  for (int qi = 0; qi < nq; ++qi) {
    for (int h = 0; h < model.dims.horizon; ++h) {
      const double z = out.values()[static_cast<size_t>(qi) * model.dims.horizon + h];
      result[static_cast<size_t>(h)][static_cast<size_t>(qi)] =
          z * norm.stddev + norm.mean;
    }
  }
  return result;
}

}  // namespace drx::forecast
