#include "transport/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace transport::csv {

namespace {

std::string strip(std::string s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(strip(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

Error parse_error(const std::string& source, std::size_t row, std::size_t col,
                  const std::string& detail) {
  std::ostringstream msg;
  msg << source << ": row " << row << ", column " << col << ": " << detail;
  return Error(ErrorKind::Parse, msg.str());
}

// Covariate columns x1..xd, which must be contiguous from x1.
std::vector<Eigen::Index> covariate_columns(const Table& table,
                                            const std::string& what) {
  std::vector<Eigen::Index> cols;
  for (std::size_t k = 1;; ++k) {
    const auto c = table.column("x" + std::to_string(k));
    if (c < 0) break;
    cols.push_back(c);
  }
  std::size_t seen = 0;
  for (const auto& h : table.header) {
    if (h.size() > 1 && h[0] == 'x') ++seen;
  }
  if (seen != cols.size()) {
    throw Error(ErrorKind::Parse,
                what + ": covariate columns must be named x1..xd without gaps");
  }
  if (cols.empty()) {
    throw Error(ErrorKind::Parse, what + ": no covariate columns x1..xd");
  }
  return cols;
}

}  // namespace

Eigen::Index Table::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return static_cast<Eigen::Index>(j);
  }
  return -1;
}

Table read_table(std::istream& in, const std::string& source) {
  Table table;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (strip(line).empty()) continue;
    table.header = split(line);
    break;
  }
  if (table.header.empty()) {
    throw Error(ErrorKind::Parse, source + ": missing header line");
  }
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (table.header[j].empty()) {
      throw parse_error(source, row, j + 1, "empty column name");
    }
  }
  const auto width = table.header.size();
  std::vector<double> data;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    ++row;
    if (strip(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != width) {
      throw parse_error(source, row, std::min(cells.size(), width) + 1,
                        "expected " + std::to_string(width) + " cells, found " +
                            std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < width; ++j) {
      const auto& cell = cells[j];
      double v = 0.0;
      const auto* first = cell.data();
      const auto* last = cell.data() + cell.size();
      if (!cell.empty() && *first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw parse_error(source, row, j + 1,
                          "non-numeric cell '" + cell + "' under '" + table.header[j] + "'");
      }
      data.push_back(v);
    }
    ++rows;
  }
  table.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                Eigen::RowMajor>>(
      data.data(), rows, static_cast<Eigen::Index>(width));
  return table;
}

Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::Parse, "cannot open " + path.string());
  }
  return read_table(in, path.string());
}

TrialSample parse_trial(const Table& table) {
  const auto yc = table.column("y");
  const auto zc = table.column("z");
  if (yc < 0 || zc < 0) {
    throw Error(ErrorKind::Parse, "trial file needs columns y and z");
  }
  const auto xc = covariate_columns(table, "trial file");
  MatrixXd x(table.values.rows(), static_cast<Eigen::Index>(xc.size()));
  for (std::size_t j = 0; j < xc.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)) = table.values.col(xc[j]);
  }
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    const double z = table.values(i, zc);
    if (z != 0.0 && z != 1.0) {
      throw parse_error("trial file", static_cast<std::size_t>(i) + 2,
                        static_cast<std::size_t>(zc) + 1,
                        "treatment indicator must be 0 or 1");
    }
  }
  return TrialSample::make(std::move(x), table.values.col(zc), table.values.col(yc));
}

TrialSample read_trial(const std::filesystem::path& path) {
  return parse_trial(read_table(path));
}

TargetIndividual parse_target(const Table& table) {
  const auto xc = covariate_columns(table, "target file");
  TargetIndividual target;
  target.x.resize(table.values.rows(), static_cast<Eigen::Index>(xc.size()));
  for (std::size_t j = 0; j < xc.size(); ++j) {
    target.x.col(static_cast<Eigen::Index>(j)) = table.values.col(xc[j]);
  }
  if (const auto qc = table.column("q"); qc >= 0) {
    target.q = table.values.col(qc);
  }
  target.validate();
  return target;
}

TargetIndividual read_target(const std::filesystem::path& path) {
  return parse_target(read_table(path));
}

TargetMoments parse_moments(const Table& table, const BalanceSpec& spec) {
  if (table.values.rows() != 1) {
    throw Error(ErrorKind::Parse,
                "moments file must contain exactly one row of means");
  }
  TargetMoments moments;
  moments.theta0.resize(static_cast<Eigen::Index>(spec.dimension()));
  moments.theta0[0] = 1.0;
  for (std::size_t j = 0; j < spec.terms.size(); ++j) {
    const auto label = spec.terms[j].label();
    const auto c = table.column(label);
    if (c < 0) {
      throw Error(ErrorKind::Parse,
                  "moments file has no column for balance term '" + label + "'");
    }
    moments.theta0[static_cast<Eigen::Index>(j + 1)] = table.values(0, c);
  }
  if (const auto nc = table.column("n0"); nc >= 0) {
    const double n0 = table.values(0, nc);
    if (n0 < 1.0 || n0 != std::floor(n0)) {
      throw Error(ErrorKind::Parse, "moments file: n0 must be a positive integer");
    }
    moments.n0 = static_cast<std::size_t>(n0);
  }
  moments.validate();
  return moments;
}

TargetMoments read_moments(const std::filesystem::path& path,
                           const BalanceSpec& spec) {
  return parse_moments(read_table(path), spec);
}

void write_trial(std::ostream& out, const TrialSample& trial) {
  out << "y,z";
  for (Eigen::Index j = 0; j < trial.x.cols(); ++j) out << ",x" << j + 1;
  out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < trial.x.rows(); ++i) {
    out << trial.y[i] << ',' << trial.z[i];
    for (Eigen::Index j = 0; j < trial.x.cols(); ++j) out << ',' << trial.x(i, j);
    out << '\n';
  }
}

void write_target(std::ostream& out, const TargetIndividual& target) {
  for (Eigen::Index j = 0; j < target.x.cols(); ++j) {
    out << (j ? "," : "") << 'x' << j + 1;
  }
  if (target.q) out << ",q";
  out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < target.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < target.x.cols(); ++j) {
      out << (j ? "," : "") << target.x(i, j);
    }
    if (target.q) out << ',' << (*target.q)[i];
    out << '\n';
  }
}

void write_moments(std::ostream& out, const BalanceSpec& spec,
                   const VectorXd& theta0) {
  const auto labels = spec.labels();
  for (std::size_t j = 0; j < labels.size(); ++j) out << (j ? "," : "") << labels[j];
  out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    out << (j ? "," : "") << theta0[static_cast<Eigen::Index>(j + 1)];
  }
  out << '\n';
}

}  // namespace transport::csv
