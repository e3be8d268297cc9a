#include "transport/data_model.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace transport {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Degenerate: return "degenerate input";
    case ErrorKind::Dimension: return "dimension mismatch";
    case ErrorKind::Rank: return "rank deficiency";
    case ErrorKind::Infeasible: return "infeasible balance constraints";
    case ErrorKind::Separation: return "separation";
    case ErrorKind::NotConverged: return "not converged";
    case ErrorKind::EstimandUnavailable: return "estimand unavailable";
  }
  return "error";
}

std::string_view to_string(Arm arm) {
  return arm == Arm::Treated ? "treated" : "control";
}

std::string_view to_string(TargetMode mode) {
  return mode == TargetMode::MomentsOnly ? "moments-only" : "individual-level";
}

std::string_view to_string(Estimand estimand) {
  return estimand == Estimand::SATE ? "SATE" : "PATE";
}

TargetMode mode_of(const TargetInfo& target) {
  return std::holds_alternative<TargetMoments>(target)
             ? TargetMode::MomentsOnly
             : TargetMode::IndividualLevel;
}

// ---------------------------------------------------------------------------
// TrialSample

TrialSample TrialSample::make(MatrixXd x, VectorXd z, VectorXd y) {
  TrialSample s{std::move(x), std::move(z), std::move(y)};
  s.validate();
  return s;
}

void TrialSample::validate() const {
  if (z.size() != x.rows() || y.size() != x.rows()) {
    throw Error(ErrorKind::Dimension,
                "trial sample: x, z and y must share the row count");
  }
  if (x.rows() < 2) {
    throw Error(ErrorKind::Degenerate, "trial sample needs at least 2 units");
  }
  if (!x.allFinite() || !y.allFinite()) {
    throw Error(ErrorKind::Degenerate, "trial sample contains non-finite values");
  }
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z[i] != 0.0 && z[i] != 1.0) {
      std::ostringstream msg;
      msg << "trial sample: treatment indicator at row " << i + 1
          << " is not 0/1";
      throw Error(ErrorKind::Degenerate, msg.str());
    }
  }
  const auto treated = treated_count();
  if (treated == 0 || treated == size()) {
    throw Error(ErrorKind::Degenerate,
                "trial sample needs at least one treated and one control unit");
  }
}

std::size_t TrialSample::treated_count() const {
  return static_cast<std::size_t>((z.array() == 1.0).count());
}

std::vector<Eigen::Index> TrialSample::arm_rows(Arm arm) const {
  const double flag = arm == Arm::Treated ? 1.0 : 0.0;
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z[i] == flag) rows.push_back(i);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// TargetInfo

void TargetMoments::validate() const {
  if (theta0.size() == 0 || theta0[0] != 1.0) {
    throw Error(ErrorKind::Config,
                "target moments: first component must be the intercept moment 1");
  }
  if (!theta0.allFinite()) {
    throw Error(ErrorKind::Degenerate, "target moments contain non-finite values");
  }
  if (n0 && *n0 == 0) {
    throw Error(ErrorKind::Config, "target moments: n0 must be positive");
  }
}

void TargetIndividual::validate() const {
  if (x.rows() < 1) {
    throw Error(ErrorKind::Degenerate, "target sample has no rows");
  }
  if (!x.allFinite()) {
    throw Error(ErrorKind::Degenerate, "target sample contains non-finite values");
  }
  if (q) {
    if (q->size() != x.rows()) {
      throw Error(ErrorKind::Dimension,
                  "target survey weights must have one entry per row");
    }
    if (!q->allFinite() || (q->array() <= 0.0).any()) {
      throw Error(ErrorKind::Degenerate,
                  "target survey weights must be finite and strictly positive");
    }
  }
}

// ---------------------------------------------------------------------------
// Feature terms

FeatureTerm FeatureTerm::raw(std::size_t column) {
  return FeatureTerm{Kind::Raw, column, 0, 1};
}

FeatureTerm FeatureTerm::power(std::size_t column, int exponent) {
  return FeatureTerm{Kind::Power, column, 0, exponent};
}

FeatureTerm FeatureTerm::interaction(std::size_t a, std::size_t b) {
  return FeatureTerm{Kind::Interaction, a, b, 1};
}

std::string FeatureTerm::label() const {
  const auto name = [](std::size_t c) { return "x" + std::to_string(c + 1); };
  switch (kind) {
    case Kind::Raw: return name(column);
    case Kind::Power: return name(column) + "^" + std::to_string(exponent);
    case Kind::Interaction: return name(column) + ":" + name(other);
  }
  return {};
}

double FeatureTerm::evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  const auto a = static_cast<Eigen::Index>(column);
  switch (kind) {
    case Kind::Raw: return row[a];
    case Kind::Power: {
      double v = 1.0;
      for (int k = 0; k < exponent; ++k) v *= row[a];
      return v;
    }
    case Kind::Interaction: return row[a] * row[static_cast<Eigen::Index>(other)];
  }
  return 0.0;
}

std::size_t FeatureTerm::max_column() const {
  return kind == Kind::Interaction ? std::max(column, other) : column;
}

// ---------------------------------------------------------------------------
// BalanceSpec

BalanceSpec BalanceSpec::main_effects(std::size_t d) {
  BalanceSpec spec;
  spec.terms.reserve(d);
  for (std::size_t j = 0; j < d; ++j) spec.terms.push_back(FeatureTerm::raw(j));
  return spec;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::size_t parse_variable(std::string_view token, std::string_view whole) {
  const auto bad = [&] {
    return Error(ErrorKind::Config, "balance spec: cannot parse term '" +
                                        std::string(token) + "' in '" +
                                        std::string(whole) + "'");
  };
  if (token.size() < 2 || token[0] != 'x') throw bad();
  std::size_t index = 0;
  const auto* first = token.data() + 1;
  const auto* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, index);
  if (ec != std::errc() || ptr != last || index == 0) throw bad();
  return index - 1;
}

}  // namespace

BalanceSpec BalanceSpec::parse(std::string_view text) {
  BalanceSpec spec;
  const std::string whole = trim(text);
  if (whole.empty()) {
    throw Error(ErrorKind::Config, "balance spec is empty");
  }
  if (whole == "1") return spec;

  std::size_t start = 0;
  while (start <= whole.size()) {
    const auto plus = whole.find('+', start);
    const std::string token =
        trim(std::string_view(whole).substr(start, plus == std::string::npos
                                                       ? std::string::npos
                                                       : plus - start));
    if (token.empty()) {
      throw Error(ErrorKind::Config, "balance spec: empty term in '" + whole + "'");
    }
    if (const auto colon = token.find(':'); colon != std::string::npos) {
      spec.terms.push_back(FeatureTerm::interaction(
          parse_variable(trim(std::string_view(token).substr(0, colon)), whole),
          parse_variable(trim(std::string_view(token).substr(colon + 1)), whole)));
    } else if (const auto caret = token.find('^'); caret != std::string::npos) {
      const std::string exp_text = trim(std::string_view(token).substr(caret + 1));
      int exponent = 0;
      auto [ptr, ec] = std::from_chars(exp_text.data(),
                                       exp_text.data() + exp_text.size(), exponent);
      if (ec != std::errc() || ptr != exp_text.data() + exp_text.size() ||
          exponent < 1) {
        throw Error(ErrorKind::Config,
                    "balance spec: bad exponent in term '" + token + "'");
      }
      spec.terms.push_back(FeatureTerm::power(
          parse_variable(trim(std::string_view(token).substr(0, caret)), whole),
          exponent));
    } else {
      spec.terms.push_back(FeatureTerm::raw(parse_variable(token, whole)));
    }
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  return spec;
}

std::vector<std::string> BalanceSpec::labels() const {
  std::vector<std::string> out;
  out.reserve(terms.size());
  for (const auto& t : terms) out.push_back(t.label());
  return out;
}

std::string BalanceSpec::to_string() const {
  if (terms.empty()) return "1";
  std::string out;
  for (const auto& t : terms) {
    if (!out.empty()) out += " + ";
    out += t.label();
  }
  return out;
}

MatrixXd apply_balance_spec(const BalanceSpec& spec, const MatrixXd& x) {
  for (const auto& t : spec.terms) {
    if (t.max_column() >= static_cast<std::size_t>(x.cols())) {
      throw Error(ErrorKind::Config,
                  "balance spec term " + t.label() + " references a column beyond the " +
                      std::to_string(x.cols()) + " available covariates");
    }
  }
  const auto m = static_cast<Eigen::Index>(spec.dimension());
  MatrixXd features(x.rows(), m);
  features.col(0).setOnes();
  for (Eigen::Index j = 1; j < m; ++j) {
    const auto& term = spec.terms[static_cast<std::size_t>(j - 1)];
    if (term.kind == FeatureTerm::Kind::Raw) {
      features.col(j) = x.col(static_cast<Eigen::Index>(term.column));
      continue;
    }
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      features(i, j) = term.evaluate(x.row(i));
    }
  }
  return features;
}

VectorXd compute_target_moments(const TargetIndividual& target,
                                const BalanceSpec& spec) {
  target.validate();
  const MatrixXd features = apply_balance_spec(spec, target.x);
  if (!target.q) {
    return features.colwise().mean().transpose();
  }
  const double total = target.q->sum();
  if (!(total > 0.0)) {
    throw Error(ErrorKind::Degenerate, "target survey weights sum to zero");
  }
  VectorXd theta = features.transpose() * *target.q / total;
  theta[0] = 1.0;
  return theta;
}

VectorXd resolve_target_moments(const TargetInfo& target,
                                const BalanceSpec& spec) {
  if (const auto* moments = std::get_if<TargetMoments>(&target)) {
    moments->validate();
    if (static_cast<std::size_t>(moments->theta0.size()) != spec.dimension()) {
      throw Error(ErrorKind::Dimension,
                  "target moments have " + std::to_string(moments->theta0.size()) +
                      " components but the balance spec has " +
                      std::to_string(spec.dimension()));
    }
    return moments->theta0;
  }
  return compute_target_moments(std::get<TargetIndividual>(target), spec);
}

}  // namespace transport
