#include "mars/csv.hpp"

#include "mars/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace mars::io {

namespace {

std::vector<double> parse_row(const std::string& line, int number) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    while (end != nullptr && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
    if (field.find_first_not_of(" \t\r") == std::string::npos || *end != '\0') {
      throw Error(ErrorCode::Io, "line " + std::to_string(number) + ": bad number '" + field + "'");
    }
    out.push_back(v);
  }
  return out;
}

bool skip_line(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

template <typename T>
T expect(std::istream& in, const char* what) {
  T value{};
  if (!(in >> value)) throw Error(ErrorCode::Io, std::string("mixture dump: cannot read ") + what);
  return value;
}

void expect_word(std::istream& in, const std::string& word) {
  const auto got = expect<std::string>(in, word.c_str());
  if (got != word) throw Error(ErrorCode::Io, "mixture dump: expected '" + word + "', got '" + got + "'");
}

}  // namespace

void write_dataset(std::ostream& out, const LabeledDataset& data) {
  out << kDatasetSchema << "\n";
  for (Eigen::Index c = 0; c < data.points.cols(); ++c) out << "x" << c << ",";
  out << "label\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < data.points.rows(); ++i) {
    for (Eigen::Index c = 0; c < data.points.cols(); ++c) out << data.points(i, c) << ",";
    out << data.labels[static_cast<std::size_t>(i)] << "\n";
  }
}

LabeledDataset read_dataset(std::istream& in) {
  std::string line;
  int number = 0;
  bool header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++number;
    if (skip_line(line)) continue;
    if (!header) {
      header = true;
      if (line.rfind("x0", 0) == 0 || line.rfind("label", 0) == 0) continue;
    }
    rows.push_back(parse_row(line, number));
    if (rows.back().size() != rows.front().size() || rows.back().size() < 2) {
      throw Error(ErrorCode::ShapeMismatch, "line " + std::to_string(number) + ": inconsistent row");
    }
  }
  if (rows.empty()) throw Error(ErrorCode::EmptyInput, "dataset has no rows");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size()) - 1;
  LabeledDataset data;
  data.points.resize(n, d);
  data.labels.resize(rows.size());
  int classes = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < d; ++c) data.points(i, c) = r[static_cast<std::size_t>(c)];
    const double y = r.back();
    if (y < 0 || y != std::floor(y)) throw Error(ErrorCode::Io, "labels must be nonnegative integers");
    data.labels[static_cast<std::size_t>(i)] = static_cast<int>(y);
    classes = std::max(classes, static_cast<int>(y) + 1);
  }
  data.true_proportions = Vector::Zero(classes);
  for (int y : data.labels) data.true_proportions[y] += 1.0;
  data.true_proportions /= static_cast<double>(n);
  return data;
}

Matrix read_matrix(std::istream& in) {
  std::string line;
  int number = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++number;
    if (skip_line(line)) continue;
    rows.push_back(parse_row(line, number));
    if (rows.back().size() != rows.front().size()) {
      throw Error(ErrorCode::ShapeMismatch, "line " + std::to_string(number) + ": ragged row");
    }
  }
  if (rows.empty()) throw Error(ErrorCode::EmptyInput, "matrix has no rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return m;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  out.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << "\n";
  }
}

void write_mixture(std::ostream& out, const mixture::MixtureModel& model) {
  out << kMixtureSchema << "\n";
  out << "components " << model.components() << " dim " << model.dim() << "\n";
  out.precision(17);
  for (int k = 0; k < model.components(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    out << "component " << k << " weight " << model.proportions[k] << "\nmean";
    for (Eigen::Index c = 0; c < model.means[kk].size(); ++c) out << " " << model.means[kk][c];
    out << "\ncovariance\n";
    const Matrix& cov = model.covariances[kk];
    for (Eigen::Index r = 0; r < cov.rows(); ++r) {
      for (Eigen::Index c = 0; c < cov.cols(); ++c) out << (c ? " " : "") << cov(r, c);
      out << "\n";
    }
  }
}

mixture::MixtureModel read_mixture(std::istream& in) {
  std::string schema;
  std::getline(in, schema);
  if (schema != kMixtureSchema) throw Error(ErrorCode::Io, "not a mixture dump");
  expect_word(in, "components");
  const int components = expect<int>(in, "component count");
  expect_word(in, "dim");
  const int dim = expect<int>(in, "dimension");
  if (components < 1 || dim < 1) throw Error(ErrorCode::Io, "mixture dump: bad sizes");
  mixture::MixtureModel model;
  model.proportions.resize(components);
  for (int k = 0; k < components; ++k) {
    expect_word(in, "component");
    if (expect<int>(in, "component index") != k) throw Error(ErrorCode::Io, "mixture dump: components out of order");
    expect_word(in, "weight");
    model.proportions[k] = expect<double>(in, "weight");
    expect_word(in, "mean");
    Vector mean(dim);
    for (int c = 0; c < dim; ++c) mean[c] = expect<double>(in, "mean entry");
    expect_word(in, "covariance");
    Matrix cov(dim, dim);
    for (int r = 0; r < dim; ++r) {
      for (int c = 0; c < dim; ++c) cov(r, c) = expect<double>(in, "covariance entry");
    }
    model.means.push_back(std::move(mean));
    model.covariances.push_back(std::move(cov));
  }
  return model;
}

Matrix read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return read_matrix(in);
}

LabeledDataset read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return read_dataset(in);
}

}  // namespace mars::io
