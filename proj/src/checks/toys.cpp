#include <cmath>

#include "ascan/classifier.hpp"
#include "ascan/diffusion.hpp"
#include "common.hpp"

namespace ascan {

using checks_detail::fmt;

CheckSuite check_toy_classifier() {
  CheckSuite s{"toy.classifier", {}};
  const Dataset data = make_blobs(128, 2, 3, 8, 0.3, 7);
  auto model = build_model(toy_classifier_spec(), 2, 3);
  const TrainRecipe r = toy_recipe();
  const auto res = train_epochs(*model, data, r, 3);
  int first = -1;
  double best = 0;
  for (const auto& e : res.history) {
    best = std::max(best, e.acc);
    if (first < 0 && e.acc >= 0.95) first = e.epoch + 1;
  }
  s.items.push_back({"2-class 8x8 train accuracy >= 95% within 30 epochs", first > 0 && first <= 30,
                     first > 0 ? fmt("reached at epoch %d of %d, best %.4f", first, r.epochs, best)
                               : fmt("best %.4f after %d epochs", best, r.epochs)});
  return s;
}

CheckSuite check_toy_diffusion() {
  CheckSuite s{"toy.diffusion", {}};
  const auto rep = run_toy_2d(1, toy_2d_recipe());
  const double drop = 1 - rep.trained_loss / rep.baseline_loss;
  s.items.push_back({"loss reduced >= 50% from the zero-model baseline", drop >= 0.5,
                     fmt("baseline %.4f trained %.4f (-%.1f%%)", rep.baseline_loss, rep.trained_loss, 100 * drop)});
  const auto& m = rep.sample_moments;
  const auto& d = rep.data_moments;
  const double exx = std::abs(m[0] - d[0]) / d[0], eyy = std::abs(m[2] - d[2]) / d[2];
  s.items.push_back({"sample E[xx] within 10%", exx <= 0.1, fmt("%.4f vs %.4f", m[0], d[0])});
  s.items.push_back({"sample E[yy] within 10%", eyy <= 0.1, fmt("%.4f vs %.4f", m[2], d[2])});
  const double num = std::sqrt(std::pow(m[0] - d[0], 2) + 2 * std::pow(m[1] - d[1], 2) + std::pow(m[2] - d[2], 2));
  const double den = std::sqrt(d[0] * d[0] + 2 * d[1] * d[1] + d[2] * d[2]);
  s.items.push_back({"second-moment matrix within 10% (Frobenius)", num / den <= 0.1,
                     fmt("rel err %.4f, E[xy] %.4f vs %.4f", num / den, m[1], d[1])});
  return s;
}

}  // namespace ascan
