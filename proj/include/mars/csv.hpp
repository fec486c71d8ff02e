#pragma once

// Text formats: labeled datasets and dense matrices as CSV, and the
// Gaussian-mixture dump used for debugging.

#include "mars/mixture.hpp"
#include "mars/types.hpp"

#include <iosfwd>
#include <string>
#include <string_view>

namespace mars::io {

inline constexpr std::string_view kDatasetSchema = "# mars-dataset v1";
inline constexpr std::string_view kMixtureSchema = "mars-gmm v1";

// Header `x0,...,x{d-1},label`, one row per point.
void write_dataset(std::ostream& out, const LabeledDataset& data);
// true_proportions is set to the empirical label proportions.
LabeledDataset read_dataset(std::istream& in);

// Plain numeric CSV; lines starting with '#' and blank lines are skipped.
// All rows must have the same number of fields.
Matrix read_matrix(std::istream& in);
void write_matrix(std::ostream& out, const Matrix& m);

void write_mixture(std::ostream& out, const mixture::MixtureModel& model);
mixture::MixtureModel read_mixture(std::istream& in);

Matrix read_matrix_file(const std::string& path);
LabeledDataset read_dataset_file(const std::string& path);

}  // namespace mars::io
