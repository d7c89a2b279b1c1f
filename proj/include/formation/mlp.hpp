#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "formation/geometry.hpp"
#include "formation/json_io.hpp"
#include "formation/metrics.hpp"

namespace formation {

/// One hidden layer, logistic sigmoid hidden units, linear outputs.
struct MlpSpec {
  std::size_t n_in = 2;
  std::size_t n_hidden = 36;
  std::size_t n_out = 2;
};

std::size_t parameter_count(const MlpSpec& spec);

/// Per-dimension affine map of the training range [min, max] onto [-1, 1].
/// A dimension with max == min passes through unscaled.
struct AffineScaler {
  Eigen::VectorXd center;
  Eigen::VectorXd half_range;

  static AffineScaler identity(std::size_t dims);
  /// Fits on the given rows of `data` (samples x dims).
  static AffineScaler fit(const Eigen::MatrixXd& data, std::span<const std::size_t> rows);

  Eigen::VectorXd normalize(const Eigen::VectorXd& v) const;
  Eigen::VectorXd denormalize(const Eigen::VectorXd& v) const;
};

struct MlpModel {
  MlpSpec spec;
  Eigen::MatrixXd w1;  // n_hidden x n_in
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // n_out x n_hidden
  Eigen::VectorXd b2;
  AffineScaler input_norm;
  AffineScaler output_norm;

  /// Zero weights with identity scalers.
  static MlpModel zeros(const MlpSpec& spec);
};

/// Flattened parameters: w1 row-major, b1, w2 row-major, b2.
Eigen::VectorXd get_parameters(const MlpModel& m);
void set_parameters(MlpModel& m, const Eigen::VectorXd& theta);

/// General evaluation. Throws InvariantError when |input| != n_in.
Eigen::VectorXd evaluate(const MlpModel& m, std::span<const double> input);
/// Two-output evaluation as a field point.
Point2 forward(const MlpModel& m, std::span<const double> input);
/// Row-wise evaluation of a samples x n_in matrix.
Eigen::MatrixXd predict(const MlpModel& m, const Eigen::MatrixXd& inputs);

/// Jacobian of the denormalized outputs w.r.t. the flattened parameters.
/// Row i*n_out + k is output k of sample i.
Eigen::MatrixXd jacobian(const MlpModel& m, const Eigen::MatrixXd& inputs);

/// Solves (JtJ + mu I) delta = Jte.
Eigen::VectorXd lm_solve(const Eigen::MatrixXd& jtj, const Eigen::VectorXd& jte, double mu);
/// One Levenberg-Marquardt step for residuals e = target - prediction.
Eigen::VectorXd lm_step(const Eigen::MatrixXd& j, const Eigen::VectorXd& e, double mu);

struct TrainConfig {
  std::size_t max_epochs = 300;
  double mu0 = 1e-3;
  double mu_up = 10.0;
  double mu_down = 0.1;
  double mu_max = 1e10;
  std::size_t patience = 5;
  std::size_t val_check_every = 1;
  std::uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& cfg);

enum class StopReason { EarlyStop, MaxEpochs, MuOverflow };

std::string to_string(StopReason r);
StopReason stop_reason_from_string(const std::string& s);

struct TrainReport {
  std::size_t epochs_run = 0;
  StopReason stop_reason = StopReason::MaxEpochs;
  std::size_t best_epoch = 0;   // epoch whose parameters were returned
  std::vector<double> train_sse;  // per epoch, after the accepted step
  std::vector<double> val_sse;    // per epoch, last validation check
  ErrorStats train;
  ErrorStats val;
  ErrorStats test;
};

/// Full-batch Levenberg-Marquardt on the summed squared error in output
/// units, with early stopping on the validation indices. Returns the
/// parameters that scored best on validation (the final ones when the
/// validation set is empty).
///
/// Throws TrainError when the training inputs are all identical or when mu
/// overflows before any step was accepted.
std::pair<MlpModel, TrainReport> train_mlp(const MlpSpec& spec, const Eigen::MatrixXd& inputs,
                                          const Eigen::MatrixXd& targets, const DataSplit& split,
                                          const TrainConfig& cfg);

/// Error statistics of the model's Point2 predictions on the listed rows.
ErrorStats evaluate_rows(const MlpModel& m, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& targets, std::span<const std::size_t> rows);

Json model_to_json(const MlpModel& m);
MlpModel model_from_json(const Json& j);

Json train_report_to_json(const TrainReport& r);
TrainReport train_report_from_json(const Json& j);

}  // namespace formation
