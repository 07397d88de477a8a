#pragma once

#include <span>

#include "iega/autodiff.hpp"
#include "iega/model.hpp"
#include "iega/types.hpp"

namespace iega {

// L_c = -log P(gold | s, a), computed as a max-shifted log-sum-exp.
ad::Var classification_loss(const ForwardTrace& trace, Polarity gold);

// L_g = -sum_j mask_j alpha_j for a 1 x n alpha node. Throws DataError when
// the mask length differs from n.
ad::Var correction_loss(ad::Var alpha, std::span<const int> opinion_mask);

// L = L_c + lambda L_g. Throws ConfigError for lambda < 0.
ad::Var total_loss(ad::Var l_c, ad::Var l_g, double lambda);

}  // namespace iega
