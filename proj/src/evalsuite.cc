/*
 * Copyright 2026 The Selex Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "selex/evalsuite.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "selex/text_format.h"

namespace selex {
namespace {

// 1 - alpha rounded to 12 decimals so grid values print cleanly.
double recourse_fraction(double alpha) {
  return std::round((1.0 - alpha) * 1e12) / 1e12;
}

using nlohmann::json;

// Upper bound on oracle table updates (rows x capacity x candidates).
constexpr double kMaxOracleWork = 2e9;

// Running mean; adding values in sorted order keeps prefix means monotone.
double incremental_mean(std::span<const double> values) {
  double mean = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    mean += (values[i] - mean) / static_cast<double>(i + 1);
  }
  return mean;
}

double sorted_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return incremental_mean(values);
}

std::vector<double> present(std::span<const std::optional<double>> values) {
  std::vector<double> out;
  for (const auto& v : values) {
    if (v.has_value()) out.push_back(*v);
  }
  return out;
}

CurvePoint make_point(double x, std::vector<double> values,
                      const BootstrapOptions& bootstrap, uint64_t tag) {
  CurvePoint p;
  p.x = x;
  p.count = static_cast<int>(values.size());
  p.y = sorted_mean(values);
  BootstrapOptions local = bootstrap;
  local.rng = bootstrap.rng.child(tag);
  p.halfwidth = bootstrap_halfwidth(values, local);
  return p;
}

void sort_points(Curve& curve) {
  std::stable_sort(curve.points.begin(), curve.points.end(),
                   [](const CurvePoint& a, const CurvePoint& b) {
                     return a.x < b.x;
                   });
}

void check_rows(const RecourseData& data) {
  const auto n = static_cast<Eigen::Index>(data.scores.size());
  if (data.amortized.rows() != n || data.mc.rows() != n ||
      data.reference.rows() != n ||
      static_cast<Eigen::Index>(data.lambdas.size()) != n) {
    throw InvalidArgumentError("recourse data needs one entry per row in "
                               "every field");
  }
}

std::string csv_real(double v) { return format_real_decimal(v); }

}  // namespace

double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw InvalidArgumentError("attribution length mismatch: " +
                               std::to_string(a.size()) + " vs " +
                               std::to_string(b.size()));
  }
  if (a.size() == 0) throw InvalidArgumentError("empty attribution vectors");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

double mse(const AttributionVector& a, const AttributionVector& b) {
  return mse(a.scores, b.scores);
}

std::vector<double> average_ranks(const Eigen::VectorXd& v) {
  const auto n = static_cast<size_t>(v.size());
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return v(a) < v(b); });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v(order[j + 1]) == v(order[i])) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(const Eigen::VectorXd& a,
                               const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw InvalidArgumentError("length mismatch");
  if (a.size() < 2) throw InvalidArgumentError("Spearman needs d >= 2");
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const auto n = static_cast<double>(ra.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - mean) * (rb[i] - mean);
    var_a += (ra[i] - mean) * (ra[i] - mean);
    var_b += (rb[i] - mean) * (rb[i] - mean);
  }
  if (var_a == 0.0 || var_b == 0.0) return std::nullopt;
  return std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
}

std::optional<double> spearman(const AttributionVector& a,
                               const AttributionVector& b) {
  return spearman(a.scores, b.scores);
}

std::vector<double> row_mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) throw InvalidArgumentError("row count mismatch");
  std::vector<double> out(static_cast<size_t>(a.rows()));
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    out[r] = mse(Eigen::VectorXd(a.row(r)), Eigen::VectorXd(b.row(r)));
  }
  return out;
}

std::vector<std::optional<double>> row_spearman(const Eigen::MatrixXd& a,
                                                const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) throw InvalidArgumentError("row count mismatch");
  std::vector<std::optional<double>> out(static_cast<size_t>(a.rows()));
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    out[r] = spearman(Eigen::VectorXd(a.row(r)), Eigen::VectorXd(b.row(r)));
  }
  return out;
}

double bootstrap_halfwidth(std::span<const double> values,
                           const BootstrapOptions& options) {
  if (options.resamples <= 0 || values.size() < 2) return 0.0;
  if (!(options.level > 0.0 && options.level < 1.0)) {
    throw InvalidArgumentError("bootstrap level must lie in (0, 1)");
  }
  auto engine = options.rng.engine();
  std::uniform_int_distribution<size_t> pick(0, values.size() - 1);
  std::vector<double> means(static_cast<size_t>(options.resamples));
  for (double& m : means) {
    double sum = 0.0;
    for (size_t i = 0; i < values.size(); ++i) sum += values[pick(engine)];
    m = sum / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  const auto last = static_cast<double>(means.size() - 1);
  const auto lo = static_cast<size_t>(std::floor((1.0 - options.level) / 2.0 * last));
  const auto hi = static_cast<size_t>(std::ceil((1.0 + options.level) / 2.0 * last));
  return 0.5 * (means[std::min(hi, means.size() - 1)] - means[lo]);
}

const CurvePoint* Curve::at(double x) const {
  for (const auto& p : points) {
    if (std::abs(p.x - x) < 1e-12) return &p;
  }
  return nullptr;
}

std::vector<Curve> coverage_curve(std::span<const double> scores,
                                  std::span<const double> amortized_mse,
                                  std::span<const double> alphas,
                                  const BootstrapOptions& bootstrap,
                                  const std::string& metric_name) {
  if (scores.size() != amortized_mse.size()) {
    throw InvalidArgumentError("one score per MSE value is required");
  }
  if (scores.empty()) throw InvalidArgumentError("empty evaluation set");
  Curve metric{metric_name, "coverage", "mse", {}};
  Curve oracle{"oracle", "coverage", "mse", {}};
  std::vector<double> sorted_mse(amortized_mse.begin(), amortized_mse.end());
  std::sort(sorted_mse.begin(), sorted_mse.end());
  uint64_t tag = 0;
  for (double alpha : alphas) {
    ++tag;
    const SelectionPolicy policy = calibrate_threshold(scores, alpha);
    std::vector<double> covered;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (policy.select(scores[i])) covered.push_back(amortized_mse[i]);
    }
    if (covered.empty()) continue;
    metric.points.push_back(make_point(alpha, covered, bootstrap, 2 * tag));
    const size_t k = coverage_count(sorted_mse.size(), alpha);
    oracle.points.push_back(make_point(
        alpha, std::vector<double>(sorted_mse.begin(), sorted_mse.begin() + k),
        bootstrap, 2 * tag + 1));
  }
  sort_points(metric);
  sort_points(oracle);
  return {metric, oracle};
}

std::vector<Curve> coverage_curve(const UncertaintyMetric& metric,
                                  const AmortizedExplainer& amortizer,
                                  const Eigen::MatrixXd& reference,
                                  const Eigen::MatrixXd& inputs,
                                  std::span<const int> targets,
                                  std::span<const double> alphas,
                                  const BootstrapOptions& bootstrap) {
  const std::vector<double> scores = metric.score_batch(inputs, targets);
  const std::vector<double> errors =
      row_mse(amortizer.explain_batch(inputs, targets), reference);
  return coverage_curve(scores, errors, alphas, bootstrap, metric.kind_name());
}

RecourseData calibration_recourse_data(const SelectiveExplainer& se,
                                       const CalibrationData& cal) {
  RecourseData data;
  data.scores = se.metric().score_batch(cal.inputs, cal.targets);
  data.amortized = se.amortizer().explain_batch(cal.inputs, cal.targets);
  data.mc = cal.mc;
  data.reference = cal.reference;
  data.recourse_cost = se.recourse().cost(static_cast<int>(cal.inputs.cols()));
  for (double score : data.scores) data.lambdas.push_back(se.bins().lambda_for(score));
  check_rows(data);
  return data;
}

RecourseData prepare_recourse_data(const SelectiveExplainer& se,
                                   const CountedModel& model,
                                   const Eigen::MatrixXd& inputs,
                                   std::span<const int> targets,
                                   const Eigen::MatrixXd& reference,
                                   RngSpec rng) {
  RecourseData data;
  data.scores = se.metric().score_batch(inputs, targets);
  data.amortized = se.amortizer().explain_batch(inputs, targets);
  data.reference = reference;
  data.mc.resize(inputs.rows(), inputs.cols());
  data.lambdas.resize(data.scores.size());
  data.recourse_cost = se.recourse().cost(static_cast<int>(inputs.cols()));
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    const AttributionVector mc =
        run_mc(se.recourse(), model, inputs.row(r).transpose(),
               TargetClass{targets[static_cast<size_t>(r)]}, se.mask(),
               rng.child(static_cast<uint64_t>(r)));
    data.mc.row(r) = mc.scores.transpose();
    data.lambdas[r] = se.bins().lambda_for(data.scores[r]);
  }
  check_rows(data);
  return data;
}

Eigen::MatrixXd selective_outputs(const RecourseData& data,
                                  const SelectionPolicy& policy, bool naive,
                                  std::vector<bool>* covered) {
  check_rows(data);
  Eigen::MatrixXd out(data.amortized.rows(), data.amortized.cols());
  if (covered != nullptr) covered->assign(data.scores.size(), false);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    if (policy.select(data.scores[r])) {
      out.row(r) = data.amortized.row(r);
      if (covered != nullptr) (*covered)[r] = true;
    } else {
      const double lambda = naive ? 0.0 : data.lambdas[r];
      out.row(r) = combine_initial_guess(lambda, data.amortized.row(r).transpose(),
                                         data.mc.row(r).transpose())
                       .transpose();
    }
  }
  return out;
}

std::vector<Curve> recourse_comparison(const RecourseData& data,
                                       std::span<const double> cal_scores,
                                       std::span<const double> alphas,
                                       const BootstrapOptions& bootstrap) {
  Curve ig_mse{"initial_guess_mse", "recourse_fraction", "mse", {}};
  Curve naive_mse{"naive_mse", "recourse_fraction", "mse", {}};
  Curve ig_rho{"initial_guess_spearman", "recourse_fraction", "spearman", {}};
  Curve naive_rho{"naive_spearman", "recourse_fraction", "spearman", {}};
  uint64_t tag = 0;
  for (double alpha : alphas) {
    tag += 4;
    const SelectionPolicy policy = calibrate_threshold(cal_scores, alpha);
    const double x = recourse_fraction(alpha);
    const Eigen::MatrixXd ig = selective_outputs(data, policy, false);
    const Eigen::MatrixXd nv = selective_outputs(data, policy, true);
    ig_mse.points.push_back(
        make_point(x, row_mse(ig, data.reference), bootstrap, tag));
    naive_mse.points.push_back(
        make_point(x, row_mse(nv, data.reference), bootstrap, tag + 1));
    ig_rho.points.push_back(make_point(
        x, present(row_spearman(ig, data.reference)), bootstrap, tag + 2));
    naive_rho.points.push_back(make_point(
        x, present(row_spearman(nv, data.reference)), bootstrap, tag + 3));
  }
  std::vector<Curve> curves = {ig_mse, naive_mse, ig_rho, naive_rho};
  for (auto& c : curves) sort_points(c);
  return curves;
}

std::vector<Curve> worst_case_quantiles(std::span<const MethodErrors> methods,
                                        std::span<const double> quantiles,
                                        const BootstrapOptions& bootstrap) {
  std::vector<Curve> curves;
  uint64_t tag = 0;
  for (const auto& method : methods) {
    Curve by_mse{method.name + "_mse", "quantile", "mse", {}};
    Curve by_rho{method.name + "_spearman", "quantile", "spearman", {}};
    std::vector<double> worst_mse = method.mse;
    std::sort(worst_mse.begin(), worst_mse.end(), std::greater<>());
    std::vector<double> worst_rho = present(method.spearman);
    std::sort(worst_rho.begin(), worst_rho.end());
    for (double q : quantiles) {
      tag += 2;
      if (!(q > 0.0 && q <= 1.0)) {
        throw InvalidArgumentError("quantiles must lie in (0, 1]");
      }
      const size_t k_mse = coverage_count(worst_mse.size(), q);
      if (k_mse > 0) {
        std::vector<double> prefix(worst_mse.begin(), worst_mse.begin() + k_mse);
        CurvePoint p = make_point(q, prefix, bootstrap, tag);
        // Worst-first order keeps the prefix means monotone.
        p.y = incremental_mean(prefix);
        by_mse.points.push_back(p);
      }
      const size_t k_rho = coverage_count(worst_rho.size(), q);
      if (k_rho > 0) {
        std::vector<double> prefix(worst_rho.begin(), worst_rho.begin() + k_rho);
        by_rho.points.push_back(make_point(q, prefix, bootstrap, tag + 1));
      }
    }
    sort_points(by_mse);
    sort_points(by_rho);
    curves.push_back(std::move(by_mse));
    curves.push_back(std::move(by_rho));
  }
  return curves;
}

Curve perturbation_curve(const CountedModel& model,
                         const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& attributions,
                         const MaskingSpec& mask,
                         std::span<const double> fractions,
                         const PerturbationOptions& options,
                         const std::string& name) {
  const Eigen::Index n = inputs.rows();
  const Eigen::Index d = inputs.cols();
  if (attributions.rows() != n || attributions.cols() != d) {
    throw InvalidArgumentError("one attribution row per input row is required");
  }
  if (mask.baseline.size() != d) {
    throw InvalidArgumentError("baseline dimension mismatch");
  }
  std::vector<int> reference;
  if (options.gold_labels.has_value()) {
    reference = *options.gold_labels;
    if (static_cast<Eigen::Index>(reference.size()) != n) {
      throw InvalidArgumentError("one gold label per row is required");
    }
  } else {
    reference = argmax_rows(model.evaluate_batch(inputs));
  }
  std::vector<std::vector<int>> order(static_cast<size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    auto& o = order[r];
    o.resize(static_cast<size_t>(d));
    std::iota(o.begin(), o.end(), 0);
    std::stable_sort(o.begin(), o.end(), [&](int a, int b) {
      return attributions(r, a) > attributions(r, b);
    });
  }
  Curve curve{name, "fraction_removed", "accuracy", {}};
  for (double fraction : fractions) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
      throw InvalidArgumentError("removal fractions must lie in [0, 1]");
    }
    const auto removed = static_cast<int>(std::lround(fraction * d));
    Eigen::MatrixXd masked = inputs;
    for (Eigen::Index r = 0; r < n; ++r) {
      for (int t = 0; t < removed; ++t) {
        const int j = order[r][t];
        masked(r, j) = mask.baseline(j);
      }
    }
    const std::vector<int> predicted = argmax_rows(model.evaluate_batch(masked));
    int agree = 0;
    for (Eigen::Index r = 0; r < n; ++r) agree += predicted[r] == reference[r];
    CurvePoint p;
    p.x = fraction;
    p.y = static_cast<double>(agree) / static_cast<double>(n);
    p.count = static_cast<int>(n);
    curve.points.push_back(p);
  }
  sort_points(curve);
  return curve;
}

std::vector<std::optional<double>> oracle_allocation(
    std::span<const std::vector<double>> errors,
    std::span<const int64_t> costs, std::span<const double> budgets) {
  if (errors.empty() || errors.size() != costs.size()) {
    throw InvalidArgumentError("one cost per candidate is required");
  }
  const size_t rows = errors.front().size();
  for (const auto& e : errors) {
    if (e.size() != rows) {
      throw InvalidArgumentError("every candidate needs one error per row");
    }
  }
  if (rows == 0) throw InvalidArgumentError("empty evaluation set");
  const int64_t min_cost = *std::min_element(costs.begin(), costs.end());
  int64_t unit = 0;
  for (int64_t c : costs) {
    if (c < 0) throw InvalidArgumentError("costs must be nonnegative");
    unit = std::gcd(unit, c - min_cost);
  }
  if (unit == 0) unit = 1;
  std::vector<int64_t> units;
  for (int64_t c : costs) units.push_back((c - min_cost) / unit);

  const auto capacity_of = [&](double budget) -> int64_t {
    const double spare = budget - static_cast<double>(rows) * min_cost;
    if (spare < 0.0) return -1;
    return static_cast<int64_t>(std::floor(spare / unit + 1e-9));
  };
  int64_t capacity = 0;
  for (double b : budgets) capacity = std::max(capacity, capacity_of(b));
  const int64_t max_units = *std::max_element(units.begin(), units.end());
  capacity = std::min<int64_t>(capacity, max_units * static_cast<int64_t>(rows));
  if (static_cast<double>(rows) * static_cast<double>(capacity + 1) *
          static_cast<double>(units.size()) > kMaxOracleWork) {
    throw InvalidArgumentError("oracle allocation table is too large; reduce "
                               "the evaluation set or the budget grid");
  }
  // best[c]: minimum error sum over the rows so far with at most c units.
  std::vector<double> best(static_cast<size_t>(capacity + 1), 0.0);
  std::vector<double> next(best.size());
  for (size_t i = 0; i < rows; ++i) {
    for (int64_t c = 0; c <= capacity; ++c) {
      double v = std::numeric_limits<double>::infinity();
      for (size_t j = 0; j < units.size(); ++j) {
        if (units[j] > c) continue;
        v = std::min(v, best[static_cast<size_t>(c - units[j])] + errors[j][i]);
      }
      next[static_cast<size_t>(c)] = v;
    }
    std::swap(best, next);
  }
  std::vector<std::optional<double>> out;
  for (double b : budgets) {
    const int64_t c = capacity_of(b);
    if (c < 0) {
      out.push_back(std::nullopt);
    } else {
      out.push_back(best[static_cast<size_t>(std::min(c, capacity))] /
                    static_cast<double>(rows));
    }
  }
  return out;
}

std::vector<Curve> time_sharing(std::span<const TimeShareLevel> levels,
                                std::span<const double> cal_scores,
                                const BootstrapOptions& bootstrap) {
  if (levels.size() < 2) {
    throw InvalidArgumentError("time sharing needs at least two cache levels");
  }
  std::vector<size_t> order(levels.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return levels[a].cost < levels[b].cost;
  });
  const int n = levels[order[0]].data.num_rows();
  std::vector<std::vector<double>> errors;
  std::vector<int64_t> costs;
  std::vector<double> budgets;
  for (size_t idx : order) {
    check_rows(levels[idx].data);
    if (levels[idx].data.num_rows() != n) {
      throw InvalidArgumentError("every level must cover the same rows");
    }
    errors.push_back(row_mse(levels[idx].data.mc, levels[idx].data.reference));
    costs.push_back(levels[idx].cost);
    budgets.push_back(static_cast<double>(n) *
                      static_cast<double>(levels[idx].cost));
  }
  const auto oracle = oracle_allocation(errors, costs, budgets);

  Curve vanilla{"vanilla", "total_inferences", "mse", {}};
  Curve oracle_curve{"oracle", "total_inferences", "mse", {}};
  Curve selective{"selective", "total_inferences", "mse", {}};
  Curve selective_cost{"selective_cost", "total_inferences",
                       "realized_total_inferences", {}};
  Curve selective_level{"selective_level", "total_inferences",
                        "recourse_level", {}};
  bool with_calibration = true;
  for (const auto& level : levels) {
    if (!level.calibration.has_value()) {
      with_calibration = false;
    } else {
      check_rows(*level.calibration);
      if (level.calibration->num_rows() != static_cast<int>(cal_scores.size())) {
        throw InvalidArgumentError("calibration rows do not match the scores");
      }
    }
  }
  for (size_t l = 0; l < order.size(); ++l) {
    const double budget = budgets[l];
    double sum = 0.0;
    for (double e : errors[l]) sum += e;
    CurvePoint v;
    v.x = budget;
    v.y = sum / static_cast<double>(n);
    v.count = n;
    BootstrapOptions local = bootstrap;
    local.rng = bootstrap.rng.child(3 * l);
    v.halfwidth = bootstrap_halfwidth(errors[l], local);
    vanilla.points.push_back(v);
    if (oracle[l].has_value()) {
      oracle_curve.points.push_back(CurvePoint{budget, *oracle[l], 0.0, n});
    }

    const int64_t level_cost = levels[order[l]].cost;
    auto outputs = [&](size_t r, bool on_calibration,
                       SelectionPolicy* policy_out) -> const RecourseData& {
      const TimeShareLevel& level = levels[order[r]];
      const double alpha = coverage_for_budget(static_cast<int>(level.cost),
                                               static_cast<double>(level_cost));
      *policy_out = calibrate_threshold(cal_scores, alpha);
      return on_calibration ? *level.calibration : level.data;
    };
    size_t r = std::min(l + 1, order.size() - 1);
    if (with_calibration) {
      double best = std::numeric_limits<double>::infinity();
      for (size_t c = l; c < order.size(); ++c) {
        SelectionPolicy policy;
        const RecourseData& cal = outputs(c, true, &policy);
        const Eigen::MatrixXd out = selective_outputs(cal, policy, false);
        double total = 0.0;
        for (double e : row_mse(out, cal.reference)) total += e;
        if (total < best) {
          best = total;
          r = c;
        }
      }
    }
    SelectionPolicy policy;
    const RecourseData& recourse = outputs(r, false, &policy);
    const double recourse_n = static_cast<double>(levels[order[r]].cost);
    std::vector<bool> covered;
    const Eigen::MatrixXd out = selective_outputs(recourse, policy, false, &covered);
    std::vector<double> se_errors = row_mse(out, recourse.reference);
    double realized = 0.0;
    for (bool c : covered) realized += c ? 1.0 : recourse_n + 1.0;
    CurvePoint s = make_point(budget, se_errors, bootstrap, 3 * l + 1);
    double se_sum = 0.0;
    for (double e : se_errors) se_sum += e;
    s.y = se_sum / static_cast<double>(n);
    selective.points.push_back(s);
    selective_level.points.push_back(
        CurvePoint{budget, static_cast<double>(r), 0.0, n});
    selective_cost.points.push_back(CurvePoint{budget, realized, 0.0, n});
  }
  return {vanilla, oracle_curve, selective, selective_cost, selective_level};
}

std::vector<Curve> estimator_ablation(std::span<const AblationMethod> methods,
                                      std::span<const double> cal_scores,
                                      std::span<const double> alphas,
                                      const BootstrapOptions& bootstrap) {
  std::vector<Curve> curves;
  uint64_t tag = 0;
  for (const auto& method : methods) {
    Curve by_mse{method.name + "_mse", "recourse_fraction", "mse", {}};
    Curve by_rho{method.name + "_spearman", "recourse_fraction", "spearman", {}};
    for (double alpha : alphas) {
      tag += 2;
      const SelectionPolicy policy = calibrate_threshold(cal_scores, alpha);
      const Eigen::MatrixXd out = selective_outputs(method.data, policy, false);
      by_mse.points.push_back(make_point(
          recourse_fraction(alpha), row_mse(out, method.data.reference), bootstrap, tag));
      by_rho.points.push_back(
          make_point(recourse_fraction(alpha), present(row_spearman(out, method.data.reference)),
                     bootstrap, tag + 1));
    }
    sort_points(by_mse);
    sort_points(by_rho);
    curves.push_back(std::move(by_mse));
    curves.push_back(std::move(by_rho));
  }
  return curves;
}

json EvalReport::to_json() const {
  json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["protocol"] = protocol;
  doc["metadata"] = metadata;
  json curve_list = json::array();
  for (const auto& c : curves) {
    json points = json::array();
    for (const auto& p : c.points) {
      points.push_back(
          {{"x", p.x}, {"y", p.y}, {"halfwidth", p.halfwidth}, {"count", p.count}});
    }
    curve_list.push_back({{"name", c.name},
                          {"x_label", c.x_label},
                          {"y_label", c.y_label},
                          {"points", points}});
  }
  doc["curves"] = curve_list;
  doc["num_examples"] = per_example.size();
  return doc;
}

std::string EvalReport::per_example_csv() const {
  std::ostringstream out;
  out << "schema_version,input_id,mse,spearman,covered,inference_cost\n";
  for (const auto& row : per_example) {
    out << kReportSchemaVersion << ',' << row.input_id << ',' << csv_real(row.mse)
        << ',' << (row.spearman ? csv_real(*row.spearman) : "") << ','
        << (row.covered ? 1 : 0) << ',' << row.inference_cost << '\n';
  }
  return out.str();
}

void EvalReport::write(const std::string& json_path,
                       const std::string& csv_path) const {
  std::ofstream json_out(json_path);
  if (!json_out) throw InvalidArgumentError("cannot write " + json_path);
  json_out << to_json().dump(2) << '\n';
  std::ofstream csv_out(csv_path);
  if (!csv_out) throw InvalidArgumentError("cannot write " + csv_path);
  csv_out << per_example_csv();
}

}  // namespace selex
