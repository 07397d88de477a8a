#include "iega/losses.hpp"

#include <algorithm>
#include <vector>

#include "iega/error.hpp"

namespace iega {

ad::Var classification_loss(const ForwardTrace& trace, Polarity gold) {
  const ad::Var z = trace.logits;
  ad::Tape& tape = *z.tape();
  const auto v = z.value().values();
  const double shift = *std::max_element(v.begin(), v.end());
  std::vector<double> onehot(kNumClasses, 0.0);
  onehot[index_of(gold)] = 1.0;
  // log sum exp(z - m) - (z_gold - m)
  const ad::Var shifted = ad::sub(z, tape.constant(Tensor::scalar(shift)));
  const ad::Var lse = ad::log(ad::sum(ad::exp(shifted)));
  return ad::sub(lse, ad::dot(shifted, tape.constant(Tensor::row(std::move(onehot)))));
}

ad::Var correction_loss(ad::Var alpha, std::span<const int> opinion_mask) {
  if (alpha.value().numel() != opinion_mask.size()) {
    throw DataError("opinion mask has " + std::to_string(opinion_mask.size()) +
                    " entries for " + std::to_string(alpha.value().numel()) + " tokens");
  }
  std::vector<double> mask(opinion_mask.begin(), opinion_mask.end());
  const ad::Var m = alpha.tape()->constant(Tensor(alpha.shape(), std::move(mask)));
  return ad::scale(ad::dot(m, alpha), -1.0);
}

ad::Var total_loss(ad::Var l_c, ad::Var l_g, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  return ad::add(l_c, ad::scale(l_g, lambda));
}

}  // namespace iega
