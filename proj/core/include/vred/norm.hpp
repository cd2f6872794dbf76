#pragma once

#include <span>

#include "vred/tape.hpp"
#include "vred/tensor.hpp"

namespace vred::codec {

/// Affine feature normalization into (0,1). Fitted once after stage-1
/// training and stored in the checkpoint, never in the bitstream.
struct NormStats {
    double feature_min = 0.0;
    double feature_max = 1.0;
    double margin = 0.05;
};

/// Min/max over all feature values, widened by margin*(max-min) on each side.
NormStats fit_normalization(std::span<const Tensor> features, double margin = 0.05);

Tensor normalize(const Tensor& f, const NormStats& n, double prob_eps);
Tensor denormalize(const Tensor& f, const NormStats& n);

/// Graph version used by stage-3 training.
ad::Var normalize(ad::Tape& t, ad::Var f, const NormStats& n, double prob_eps);

}  // namespace vred::codec
