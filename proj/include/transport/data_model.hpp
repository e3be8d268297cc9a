#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "transport/error.hpp"

namespace transport {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Arm { Control = 0, Treated = 1 };

std::string_view to_string(Arm arm);

/// Units with S = 1: raw covariates, randomized treatment and observed outcome.
///
/// `z` holds exact 0.0 / 1.0 values so it can enter arithmetic directly.
struct TrialSample {
  MatrixXd x;
  VectorXd z;
  VectorXd y;

  /// Validates shapes, finiteness, binary z, and that both arms are present.
  static TrialSample make(MatrixXd x, VectorXd z, VectorXd y);

  void validate() const;

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t covariates() const { return static_cast<std::size_t>(x.cols()); }
  std::size_t treated_count() const;
  std::size_t control_count() const { return size() - treated_count(); }

  /// Row indices of the units assigned to `arm`, in sample order.
  std::vector<Eigen::Index> arm_rows(Arm arm) const;
};

/// Target summary when only covariate moments are available.
/// `theta0` lives in feature space: its first entry is the intercept moment 1.
struct TargetMoments {
  VectorXd theta0;
  std::optional<std::size_t> n0;

  void validate() const;
};

/// Individual-level target covariates with optional known survey weights.
struct TargetIndividual {
  MatrixXd x;
  std::optional<VectorXd> q;

  void validate() const;
  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
};

using TargetInfo = std::variant<TargetMoments, TargetIndividual>;

enum class TargetMode { MomentsOnly, IndividualLevel };

TargetMode mode_of(const TargetInfo& target);
std::string_view to_string(TargetMode mode);

enum class Estimand { SATE, PATE };

std::string_view to_string(Estimand estimand);

/// One balance function beyond the intercept. Column indices are 0-based;
/// labels use the 1-based `x1..xd` names of the CSV formats.
struct FeatureTerm {
  enum class Kind { Raw, Power, Interaction };

  Kind kind = Kind::Raw;
  std::size_t column = 0;
  std::size_t other = 0;  // second column for Interaction
  int exponent = 1;       // for Power

  static FeatureTerm raw(std::size_t column);
  static FeatureTerm power(std::size_t column, int exponent);
  static FeatureTerm interaction(std::size_t a, std::size_t b);

  std::string label() const;
  double evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  std::size_t max_column() const;

  friend bool operator==(const FeatureTerm&, const FeatureTerm&) = default;
};

/// Feature map c(x) = (1, term_1(x), ..., term_{m-1}(x)).
struct BalanceSpec {
  std::vector<FeatureTerm> terms;

  /// Intercept plus every raw column, the default c(X) = X.
  static BalanceSpec main_effects(std::size_t d);

  /// Parses `x1 + x2 + x1:x2 + x1^2`. A lone `1` is the intercept-only spec.
  static BalanceSpec parse(std::string_view text);

  std::size_t dimension() const { return terms.size() + 1; }
  std::vector<std::string> labels() const;  // excludes the intercept
  std::string to_string() const;
};

/// Rows x -> feature rows with a leading column of ones.
MatrixXd apply_balance_spec(const BalanceSpec& spec, const MatrixXd& x);

/// Columnwise (optionally q-weighted) mean of the target features.
VectorXd compute_target_moments(const TargetIndividual& target,
                                const BalanceSpec& spec);

/// theta0_hat for either target variant, checked against the balance-spec dimension.
VectorXd resolve_target_moments(const TargetInfo& target,
                                const BalanceSpec& spec);

}  // namespace transport
