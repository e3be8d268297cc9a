#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "transport/data_model.hpp"

namespace transport::csv {

/// Header plus numeric body. Every cell is parsed strictly; the first bad
/// cell raises ErrorKind::Parse naming its 1-based row (counting the header
/// as row 1) and column.
struct Table {
  std::vector<std::string> header;
  MatrixXd values;

  Eigen::Index column(const std::string& name) const;  // -1 when absent
};

Table read_table(std::istream& in, const std::string& source = "<stream>");
Table read_table(const std::filesystem::path& path);

/// Trial file with columns `y`, `z`, `x1..xd` in any order.
TrialSample read_trial(const std::filesystem::path& path);
TrialSample parse_trial(const Table& table);

/// Target rows `x1..xd` and optional `q`.
TargetIndividual read_target(const std::filesystem::path& path);
TargetIndividual parse_target(const Table& table);

/// Two-line moments file. Columns are feature labels (`x1`, `x1^2`,
/// `x1:x2`, ...); each spec term is looked up by label and the intercept
/// moment is prepended. An optional `n0` column records the target size.
TargetMoments read_moments(const std::filesystem::path& path,
                           const BalanceSpec& spec);
TargetMoments parse_moments(const Table& table, const BalanceSpec& spec);

void write_trial(std::ostream& out, const TrialSample& trial);
void write_target(std::ostream& out, const TargetIndividual& target);
void write_moments(std::ostream& out, const BalanceSpec& spec,
                   const VectorXd& theta0);

}  // namespace transport::csv
