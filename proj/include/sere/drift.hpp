#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sere {

struct PhaParams {
  double offset = 0.1;     // delta
  double threshold = 0.5;  // lambda_PHA
  double scale = 0.01;     // alpha
  double rho_min = 0.01;
  double rho_max = 0.1;
  bool rearm = true;  // reset the statistic after a detection

  void validate() const {
    if (!(offset > 0.0)) throw std::invalid_argument("PHA offset must be positive");
    if (!(threshold > 0.0)) throw std::invalid_argument("PHA threshold must be positive");
    if (!(scale >= 0.0)) throw std::invalid_argument("PHA scale must be non-negative");
    if (!(rho_min >= 0.0 && rho_min <= rho_max && rho_max < 1.0))
      throw std::invalid_argument("replacement-rate bounds must satisfy 0 <= rho_min <= rho_max < 1");
    if (!rate_bound_holds())
      throw std::invalid_argument("PHA parameters violate scale * threshold <= rho_max - rho_min (" +
                                  std::to_string(scale * threshold) + " > " + std::to_string(rho_max - rho_min) + ")");
  }

  bool rate_bound_holds() const { return scale * threshold <= (rho_max - rho_min) + 1e-12; }
};

struct RateDecision {
  double rho = 0.0;
  bool drift = false;
  double deviation = 0.0;
};

/// Page-Hinkley test over absolute prediction errors, driving the replacement rate.
class PhaDetector {
 public:
  PhaDetector() : PhaDetector(PhaParams{}) {}
  explicit PhaDetector(PhaParams params) : params_(params) { params_.validate(); }

  const PhaParams& params() const { return params_; }
  double pha() const { return pha_; }
  double pha_min() const { return pha_min_; }
  double deviation() const { return pha_ - pha_min_; }
  std::uint64_t detections() const { return detections_; }

  void observe(double abs_error) {
    if (!(abs_error >= 0.0)) throw std::invalid_argument("PHA observe: absolute error must be non-negative");
    pha_ += abs_error - params_.offset;
    pha_min_ = std::min(pha_min_, pha_);
  }

  /// Maps the current deviation to a replacement rate. A detection yields rho_max for
  /// this call and, when re-arming is enabled, restarts the statistic from zero.
  RateDecision current_rho() {
    const double dev = deviation();
    if (dev > params_.threshold) {
      ++detections_;
      if (params_.rearm) {
        pha_ = 0.0;
        pha_min_ = 0.0;
      }
      return {params_.rho_max, true, dev};
    }
    return {std::min(params_.rho_min + params_.scale * dev, params_.rho_max), false, dev};
  }

  RateDecision step(double abs_error) {
    observe(abs_error);
    return current_rho();
  }

 private:
  PhaParams params_;
  double pha_ = 0.0;
  double pha_min_ = 0.0;
  std::uint64_t detections_ = 0;
};

}  // namespace sere
