#pragma once

// Learns a temporal mask m = sigmoid(z) that lowers the target class score
// of the freeze-perturbed clip while staying small and smooth:
//   loss = lambda1 * sum|m| + lambda2 * sum |m[t+1] - m[t]|^beta + score_c(freeze(clip, m))

#include <vector>

#include "vidsal/models.hpp"
#include "vidsal/perturbation.hpp"

namespace vidsal::mask {

struct MaskConfig {
  double lambda1 = 0.01;
  double lambda2 = 0.02;
  double beta = 3;
  double learning_rate = 1e-3;
  std::size_t iterations = 300;
  double threshold = kMaskThreshold;
  // Pre-sigmoid start values: the central third of the frames gets
  // init_active, the rest init_inactive. The defaults sit just either side of
  // the threshold so a frame can cross it within the iteration budget.
  double init_active = -2.0472;    // sigmoid ~ 0.114
  double init_inactive = -2.3472;  // sigmoid ~ 0.087
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;  // throws ValueError
};

std::vector<double> initial_mask(std::size_t frames, const MaskConfig& config);

template <class Real>
struct LossTerms {
  ad::Var<Real> l1;     // sum |m|
  ad::Var<Real> tv;     // sum |m[t+1] - m[t]|^beta
  ad::Var<Real> score;  // softmax score of the target class on freeze(clip, m)
  ad::Var<Real> total;
};

// m is the mask activation [T]; clip is [T, H, W, C].
template <class Real>
LossTerms<Real> mask_loss(ad::Var<Real> m, ad::Var<Real> clip, const models::VideoModel<Real>& model,
                          std::size_t target, const MaskConfig& config);

struct MaskResult {
  std::size_t target_class = 0;
  std::vector<double> pre_sigmoid;
  std::vector<double> activation;
  std::vector<bool> active;      // activation > threshold
  std::vector<double> loss_trace;  // loss before each update, one per iteration
  double final_loss = 0;           // loss at the converged mask
  double original_score = 0;       // OS
  double freeze_score = 0;         // FS, continuous converged mask
  double reverse_score = 0;        // RS, thresholded converged mask
};

// Full-batch Adam on the pre-sigmoid vector. Throws DivergenceError naming
// the iteration when the loss becomes non-finite.
MaskResult optimize_mask(const models::VideoModel<float>& model, const TensorF& clip, std::size_t target,
                         const MaskConfig& config);

// Softmax score of one class for one clip (eval mode).
double class_score(const models::VideoModel<float>& model, const TensorF& clip, std::size_t target);

}  // namespace vidsal::mask
