#pragma once

#include <vector>

#include "drx/tensor.hpp"

namespace drx {

// Running statistics for one batch-normalization layer. Normalization in
// train mode uses biased batch statistics; running stats are an EMA with the
// given momentum and are the only thing eval mode reads.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.9;
  double eps = 1e-5;

  static BatchNormState init(int features) {
    BatchNormState s;
    s.running_mean.assign(features, 0.0);
    s.running_var.assign(features, 1.0);
    return s;
  }
};

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Elementwise max; on ties the gradient routes to b (so relu(x) =
// maximum(x, 0) has relu'(0) = 0).
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// y = x*w + b with x [m,k], w [k,n], b [n].
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
// a [m,k] * b [n,k]^T -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// Batched: a [B,H,D] * b [B,G,D]^T -> [B,H,G]
Tensor bmm_nt(const Tensor& a, const Tensor& b);
// Batched: a [B,H,G] * b [B,G,D] -> [B,H,D]
Tensor bmm_nn(const Tensor& a, const Tensor& b);

// Stable row softmax over the last dimension.
Tensor softmax_rows(const Tensor& x);

// Column-wise max over rows, [r,c] -> [1,c]; gradient routes to the first
// maximal row.
Tensor maxpool_over_rows(const Tensor& x);
// Per-sample variant, [B,H,C] -> [B,C].
Tensor maxpool_rows_grouped(const Tensor& x);

// x [m,f]; batch of 1 in train mode is an error.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, bool train);
// x [B,C,T]; per-channel stats over (B,T).
Tensor batchnorm_nct(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     BatchNormState& state, bool train);

// Causal dilated conv: x [B,Cin,T], w [Cout,Cin,K], b [Cout] -> [B,Cout,T].
// Left zero padding of (K-1)*dilation keeps the time length.
Tensor conv1d_causal(const Tensor& x, const Tensor& w, const Tensor& b,
                     int dilation);

// Per-channel dense over time: x [B,C,Ti], w [C,To,Ti], b [C,To] -> [B,C,To].
Tensor channelwise_dense(const Tensor& x, const Tensor& w, const Tensor& b);

// Per-step unshared 1x1 layer: x [B,C,H], w [H,F,C], b [H,F] -> [B,H,F].
Tensor local_dense(const Tensor& x, const Tensor& w, const Tensor& b);

// table [V,E], idx values in [0,V) -> [N,E]; gradient scatter-adds rows.
Tensor gather_rows(const Tensor& table, const std::vector<int>& idx);

// x [B*T,E] -> [B,E,T] (row t of sample b becomes column t of channel block).
Tensor rows_to_channels(const Tensor& x, int batch, int time);

// Concatenate along the channel axis: [B,Ci,T] -> [B,sum Ci,T].
Tensor concat_channels(const std::vector<Tensor>& parts);
// Concatenate along the last axis of 2-D tensors: [M,Ki] -> [M,sum Ki].
Tensor concat_cols(const std::vector<Tensor>& parts);

// x [B,H,C] op v [B,C] broadcast over H.
Tensor sub_bcast_rows(const Tensor& x, const Tensor& v);
Tensor mul_bcast_rows(const Tensor& x, const Tensor& v);

// Zero-copy view with a new shape of equal element count.
Tensor reshape(const Tensor& x, std::vector<int> shape);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

}  // namespace drx
