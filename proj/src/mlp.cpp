#include "formation/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "formation/error.hpp"
#include "formation/random.hpp"

namespace formation {

std::size_t parameter_count(const MlpSpec& s) {
  return s.n_hidden * s.n_in + s.n_hidden + s.n_out * s.n_hidden + s.n_out;
}

AffineScaler AffineScaler::identity(std::size_t dims) {
  return {Eigen::VectorXd::Zero(dims), Eigen::VectorXd::Ones(dims)};
}

AffineScaler AffineScaler::fit(const Eigen::MatrixXd& data, std::span<const std::size_t> rows) {
  const auto dims = static_cast<std::size_t>(data.cols());
  AffineScaler s = identity(dims);
  if (rows.empty()) return s;
  for (std::size_t c = 0; c < dims; ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t r : rows) {
      lo = std::min(lo, data(r, c));
      hi = std::max(hi, data(r, c));
    }
    if (hi > lo) {
      s.center(c) = 0.5 * (hi + lo);
      s.half_range(c) = 0.5 * (hi - lo);
    }
  }
  return s;
}

Eigen::VectorXd AffineScaler::normalize(const Eigen::VectorXd& v) const {
  return (v - center).cwiseQuotient(half_range);
}

Eigen::VectorXd AffineScaler::denormalize(const Eigen::VectorXd& v) const {
  return v.cwiseProduct(half_range) + center;
}

MlpModel MlpModel::zeros(const MlpSpec& spec) {
  if (spec.n_in == 0 || spec.n_hidden == 0 || spec.n_out == 0) {
    throw InvariantError("network dimensions must be at least 1");
  }
  MlpModel m;
  m.spec = spec;
  const auto in = static_cast<Eigen::Index>(spec.n_in);
  const auto hid = static_cast<Eigen::Index>(spec.n_hidden);
  const auto out = static_cast<Eigen::Index>(spec.n_out);
  m.w1 = Eigen::MatrixXd::Zero(hid, in);
  m.b1 = Eigen::VectorXd::Zero(hid);
  m.w2 = Eigen::MatrixXd::Zero(out, hid);
  m.b2 = Eigen::VectorXd::Zero(out);
  m.input_norm = AffineScaler::identity(spec.n_in);
  m.output_norm = AffineScaler::identity(spec.n_out);
  return m;
}

Eigen::VectorXd get_parameters(const MlpModel& m) {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(parameter_count(m.spec)));
  Eigen::Index k = 0;
  for (Eigen::Index h = 0; h < m.w1.rows(); ++h)
    for (Eigen::Index j = 0; j < m.w1.cols(); ++j) theta(k++) = m.w1(h, j);
  for (Eigen::Index h = 0; h < m.b1.size(); ++h) theta(k++) = m.b1(h);
  for (Eigen::Index o = 0; o < m.w2.rows(); ++o)
    for (Eigen::Index h = 0; h < m.w2.cols(); ++h) theta(k++) = m.w2(o, h);
  for (Eigen::Index o = 0; o < m.b2.size(); ++o) theta(k++) = m.b2(o);
  return theta;
}

void set_parameters(MlpModel& m, const Eigen::VectorXd& theta) {
  if (static_cast<std::size_t>(theta.size()) != parameter_count(m.spec)) {
    throw InvariantError("parameter vector has the wrong length");
  }
  Eigen::Index k = 0;
  for (Eigen::Index h = 0; h < m.w1.rows(); ++h)
    for (Eigen::Index j = 0; j < m.w1.cols(); ++j) m.w1(h, j) = theta(k++);
  for (Eigen::Index h = 0; h < m.b1.size(); ++h) m.b1(h) = theta(k++);
  for (Eigen::Index o = 0; o < m.w2.rows(); ++o)
    for (Eigen::Index h = 0; h < m.w2.cols(); ++h) m.w2(o, h) = theta(k++);
  for (Eigen::Index o = 0; o < m.b2.size(); ++o) m.b2(o) = theta(k++);
}

namespace {

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// Normalized inputs (samples x n_in).
Eigen::MatrixXd normalized_inputs(const MlpModel& m, const Eigen::MatrixXd& inputs) {
  if (static_cast<std::size_t>(inputs.cols()) != m.spec.n_in) {
    throw InvariantError("input has " + std::to_string(inputs.cols()) + " columns, network expects " +
                         std::to_string(m.spec.n_in));
  }
  Eigen::MatrixXd xn = inputs.rowwise() - m.input_norm.center.transpose();
  return xn.array().rowwise() / m.input_norm.half_range.transpose().array();
}

// Hidden activations (samples x n_hidden).
Eigen::MatrixXd hidden(const MlpModel& m, const Eigen::MatrixXd& xn) {
  Eigen::MatrixXd a = xn * m.w1.transpose();
  a.rowwise() += m.b1.transpose();
  return a.unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace

Eigen::MatrixXd predict(const MlpModel& m, const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd s = hidden(m, normalized_inputs(m, inputs));
  Eigen::MatrixXd out = s * m.w2.transpose();
  out.rowwise() += m.b2.transpose();
  out.array().rowwise() *= m.output_norm.half_range.transpose().array();
  out.rowwise() += m.output_norm.center.transpose();
  return out;
}

Eigen::VectorXd evaluate(const MlpModel& m, std::span<const double> input) {
  if (input.size() != m.spec.n_in) {
    throw InvariantError("input has " + std::to_string(input.size()) + " values, network expects " +
                         std::to_string(m.spec.n_in));
  }
  Eigen::MatrixXd row(1, static_cast<Eigen::Index>(input.size()));
  for (std::size_t j = 0; j < input.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = input[j];
  return predict(m, row).row(0).transpose();
}

Point2 forward(const MlpModel& m, std::span<const double> input) {
  if (m.spec.n_out != 2) throw InvariantError("forward() needs a two-output network");
  const Eigen::VectorXd y = evaluate(m, input);
  return {y(0), y(1)};
}

Eigen::MatrixXd jacobian(const MlpModel& m, const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd xn = normalized_inputs(m, inputs);
  const Eigen::MatrixXd s = hidden(m, xn);
  const Eigen::MatrixXd ds = s.array() * (1.0 - s.array());
  const Eigen::Index n = inputs.rows();
  const auto in = static_cast<Eigen::Index>(m.spec.n_in);
  const auto hid = static_cast<Eigen::Index>(m.spec.n_hidden);
  const auto out = static_cast<Eigen::Index>(m.spec.n_out);
  const Eigen::Index off_b1 = hid * in;
  const Eigen::Index off_w2 = off_b1 + hid;
  const Eigen::Index off_b2 = off_w2 + out * hid;

  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n * out, off_b2 + out);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < out; ++k) {
      const Eigen::Index r = i * out + k;
      const double scale = m.output_norm.half_range(k);
      for (Eigen::Index h = 0; h < hid; ++h) {
        const double g = scale * m.w2(k, h) * ds(i, h);
        for (Eigen::Index c = 0; c < in; ++c) j(r, h * in + c) = g * xn(i, c);
        j(r, off_b1 + h) = g;
        j(r, off_w2 + k * hid + h) = scale * s(i, h);
      }
      j(r, off_b2 + k) = scale;
    }
  }
  return j;
}

Eigen::VectorXd lm_solve(const Eigen::MatrixXd& jtj, const Eigen::VectorXd& jte, double mu) {
  Eigen::MatrixXd a = jtj;
  a.diagonal().array() += mu;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  return ldlt.solve(jte);
}

Eigen::VectorXd lm_step(const Eigen::MatrixXd& j, const Eigen::VectorXd& e, double mu) {
  return lm_solve(j.transpose() * j, j.transpose() * e, mu);
}

void validate_train_config(const TrainConfig& c) {
  if (c.max_epochs == 0 || c.patience == 0 || c.val_check_every == 0) {
    throw InvariantError("max_epochs, patience and val_check_every must be positive");
  }
  if (!(c.mu0 > 0.0) || !(c.mu_max > c.mu0)) throw InvariantError("need 0 < mu0 < mu_max");
  if (!(c.mu_down > 0.0 && c.mu_down < 1.0 && c.mu_up > 1.0)) {
    throw InvariantError("need 0 < mu_down < 1 < mu_up");
  }
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::EarlyStop: return "early_stop";
    case StopReason::MaxEpochs: return "max_epochs";
    case StopReason::MuOverflow: return "mu_overflow";
  }
  return "unknown";
}

StopReason stop_reason_from_string(const std::string& s) {
  if (s == "early_stop") return StopReason::EarlyStop;
  if (s == "max_epochs") return StopReason::MaxEpochs;
  if (s == "mu_overflow") return StopReason::MuOverflow;
  throw ParseError("unknown stop reason '" + s + "'");
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

double sse(const MlpModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() == 0) return 0.0;
  return (y - predict(m, x)).squaredNorm();
}

// Residuals flattened sample-major to match the Jacobian row layout.
Eigen::VectorXd residuals(const MlpModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const Eigen::MatrixXd diff = y - predict(m, x);
  Eigen::VectorXd e(diff.size());
  for (Eigen::Index i = 0; i < diff.rows(); ++i)
    for (Eigen::Index k = 0; k < diff.cols(); ++k) e(i * diff.cols() + k) = diff(i, k);
  return e;
}

void initialize_weights(MlpModel& m, std::uint64_t seed) {
  Rng rng(seed);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(m.spec.n_in));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(m.spec.n_hidden));
  for (Eigen::Index h = 0; h < m.w1.rows(); ++h) {
    for (Eigen::Index j = 0; j < m.w1.cols(); ++j) m.w1(h, j) = rng.uniform(-0.5, 0.5) * s1;
    m.b1(h) = rng.uniform(-0.5, 0.5) * s1;
  }
  for (Eigen::Index o = 0; o < m.w2.rows(); ++o) {
    for (Eigen::Index h = 0; h < m.w2.cols(); ++h) m.w2(o, h) = rng.uniform(-0.5, 0.5) * s2;
    m.b2(o) = rng.uniform(-0.5, 0.5) * s2;
  }
}

}  // namespace

ErrorStats evaluate_rows(const MlpModel& m, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& targets, std::span<const std::size_t> rows) {
  if (rows.empty()) return {};
  if (m.spec.n_out != 2) throw InvariantError("error statistics need a two-output network");
  const Eigen::MatrixXd pred = predict(m, gather(inputs, rows));
  std::vector<Point2> t, p;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    const auto ii = static_cast<Eigen::Index>(i);
    t.push_back({targets(r, 0), targets(r, 1)});
    p.push_back({pred(ii, 0), pred(ii, 1)});
  }
  return error_stats(t, p);
}

std::pair<MlpModel, TrainReport> train_mlp(const MlpSpec& spec, const Eigen::MatrixXd& inputs,
                                          const Eigen::MatrixXd& targets, const DataSplit& split,
                                          const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (inputs.rows() != targets.rows()) throw InvariantError("inputs and targets differ in length");
  if (inputs.rows() < 3) throw InvariantError("training needs at least 3 samples");
  if (static_cast<std::size_t>(inputs.cols()) != spec.n_in ||
      static_cast<std::size_t>(targets.cols()) != spec.n_out) {
    throw InvariantError("data dimensions do not match the network spec");
  }
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (std::size_t r : *part) {
      if (r >= static_cast<std::size_t>(inputs.rows())) throw InvariantError("split index out of range");
    }
  }
  if (split.train.empty()) throw InvariantError("training split is empty");
  if (!inputs.allFinite() || !targets.allFinite()) throw InvariantError("non-finite training data");

  const Eigen::MatrixXd xt = gather(inputs, split.train);
  const Eigen::MatrixXd yt = gather(targets, split.train);
  bool varied = false;
  for (Eigen::Index r = 1; r < xt.rows() && !varied; ++r) varied = xt.row(r) != xt.row(0);
  if (!varied) throw TrainError("degenerate data: all training inputs are identical");
  const Eigen::MatrixXd xv = gather(inputs, split.val);
  const Eigen::MatrixXd yv = gather(targets, split.val);
  const bool has_val = xv.rows() > 0;

  MlpModel model = MlpModel::zeros(spec);
  model.input_norm = AffineScaler::fit(inputs, split.train);
  model.output_norm = AffineScaler::fit(targets, split.train);
  initialize_weights(model, cfg.seed);

  TrainReport report;
  Eigen::VectorXd theta = get_parameters(model);
  Eigen::VectorXd best_theta = theta;
  double train_err = sse(model, xt, yt);
  double val_err = has_val ? sse(model, xv, yv) : 0.0;
  double best_val = val_err;
  std::size_t checks_without_improvement = 0;
  bool any_accepted = false;
  double mu = cfg.mu0;
  report.stop_reason = StopReason::MaxEpochs;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const Eigen::MatrixXd j = jacobian(model, xt);
    const Eigen::VectorXd e = residuals(model, xt, yt);
    Eigen::MatrixXd jtj = Eigen::MatrixXd::Zero(j.cols(), j.cols());
    jtj.selfadjointView<Eigen::Lower>().rankUpdate(j.transpose());
    jtj.triangularView<Eigen::StrictlyUpper>() = jtj.transpose();
    const Eigen::VectorXd jte = j.transpose() * e;

    bool accepted = false;
    while (mu <= cfg.mu_max) {
      const Eigen::VectorXd candidate = theta + lm_solve(jtj, jte, mu);
      if (candidate.allFinite()) {
        set_parameters(model, candidate);
        const double err = sse(model, xt, yt);
        if (err < train_err) {
          theta = candidate;
          train_err = err;
          mu = std::max(mu * cfg.mu_down, 1e-20);
          accepted = true;
          break;
        }
      }
      mu *= cfg.mu_up;
    }
    set_parameters(model, theta);
    if (!accepted) {
      if (!any_accepted) throw TrainError("mu overflow before any accepted step");
      report.stop_reason = StopReason::MuOverflow;
      break;
    }
    any_accepted = true;
    report.epochs_run = epoch;
    report.train_sse.push_back(train_err);

    if (has_val && epoch % cfg.val_check_every == 0) {
      val_err = sse(model, xv, yv);
      if (val_err < best_val) {
        best_val = val_err;
        best_theta = theta;
        report.best_epoch = epoch;
        checks_without_improvement = 0;
      } else if (++checks_without_improvement >= cfg.patience) {
        report.val_sse.push_back(val_err);
        report.stop_reason = StopReason::EarlyStop;
        break;
      }
    }
    report.val_sse.push_back(val_err);
  }

  if (has_val) {
    set_parameters(model, best_theta);
  } else {
    report.best_epoch = report.epochs_run;
  }
  report.train = evaluate_rows(model, inputs, targets, split.train);
  report.val = evaluate_rows(model, inputs, targets, split.val);
  report.test = evaluate_rows(model, inputs, targets, split.test);
  return {std::move(model), std::move(report)};
}

namespace {

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::MatrixXd matrix_from(const Json& j, std::size_t rows, std::size_t cols, const char* what) {
  if (!j.is_array() || j.size() != rows) throw ParseError(std::string("model: bad shape for ") + what);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ParseError(std::string("model: bad shape for ") + what);
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

Eigen::VectorXd vector_from(const Json& j, std::size_t n, const char* what) {
  if (!j.is_array() || j.size() != n) throw ParseError(std::string("model: bad shape for ") + what);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

}  // namespace

Json model_to_json(const MlpModel& m) {
  return {{"spec",
           {{"n_in", m.spec.n_in},
            {"n_hidden", m.spec.n_hidden},
            {"n_out", m.spec.n_out},
            {"hidden_activation", "logistic"},
            {"output_activation", "linear"}}},
          {"input_norm", {{"center", vector_json(m.input_norm.center)}, {"half_range", vector_json(m.input_norm.half_range)}}},
          {"output_norm", {{"center", vector_json(m.output_norm.center)}, {"half_range", vector_json(m.output_norm.half_range)}}},
          {"w1", matrix_json(m.w1)},
          {"b1", vector_json(m.b1)},
          {"w2", matrix_json(m.w2)},
          {"b2", vector_json(m.b2)}};
}

MlpModel model_from_json(const Json& j) {
  try {
    MlpSpec spec;
    spec.n_in = j.at("spec").at("n_in").get<std::size_t>();
    spec.n_hidden = j.at("spec").at("n_hidden").get<std::size_t>();
    spec.n_out = j.at("spec").at("n_out").get<std::size_t>();
    MlpModel m = MlpModel::zeros(spec);
    m.w1 = matrix_from(j.at("w1"), spec.n_hidden, spec.n_in, "w1");
    m.b1 = vector_from(j.at("b1"), spec.n_hidden, "b1");
    m.w2 = matrix_from(j.at("w2"), spec.n_out, spec.n_hidden, "w2");
    m.b2 = vector_from(j.at("b2"), spec.n_out, "b2");
    m.input_norm.center = vector_from(j.at("input_norm").at("center"), spec.n_in, "input_norm");
    m.input_norm.half_range = vector_from(j.at("input_norm").at("half_range"), spec.n_in, "input_norm");
    m.output_norm.center = vector_from(j.at("output_norm").at("center"), spec.n_out, "output_norm");
    m.output_norm.half_range = vector_from(j.at("output_norm").at("half_range"), spec.n_out, "output_norm");
    if (!get_parameters(m).allFinite()) throw InvariantError("model has non-finite parameters");
    if ((m.input_norm.half_range.array() <= 0.0).any() || (m.output_norm.half_range.array() <= 0.0).any()) {
      throw InvariantError("model normalization ranges must be positive");
    }
    return m;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

Json train_report_to_json(const TrainReport& r) {
  return {{"epochs_run", r.epochs_run},
          {"stop_reason", to_string(r.stop_reason)},
          {"best_epoch", r.best_epoch},
          {"train_sse", r.train_sse},
          {"val_sse", r.val_sse},
          {"train", error_stats_to_json(r.train)},
          {"val", error_stats_to_json(r.val)},
          {"test", error_stats_to_json(r.test)}};
}

TrainReport train_report_from_json(const Json& j) {
  try {
    TrainReport r;
    r.epochs_run = j.at("epochs_run").get<std::size_t>();
    r.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
    r.best_epoch = j.at("best_epoch").get<std::size_t>();
    r.train_sse = j.at("train_sse").get<std::vector<double>>();
    r.val_sse = j.at("val_sse").get<std::vector<double>>();
    r.train = error_stats_from_json(j.at("train"));
    r.val = error_stats_from_json(j.at("val"));
    r.test = error_stats_from_json(j.at("test"));
    return r;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("train report: ") + e.what());
  }
}

}  // namespace formation
