#include "fiem/dataset_io.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "fiem/errors.hpp"

namespace fiem {

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open '" + path + "'");
  return read_matrix_csv(in);
}

Eigen::MatrixXd read_matrix_csv(std::istream& in) {
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t count = 0;
    std::stringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      const auto first = field.find_first_not_of(" \t");
      const auto last = field.find_last_not_of(" \t");
      if (first == std::string::npos) throw ArgumentError(fmt::format("csv row {}: empty field", rows + 1));
      const std::string token = field.substr(first, last - first + 1);
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw ArgumentError(fmt::format("csv row {}: cannot parse '{}'", rows + 1, token));
      }
      values.push_back(value);
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) throw ArgumentError(fmt::format("csv row {}: expected {} fields, got {}", rows + 1, cols, count));
    ++rows;
  }
  if (rows == 0) throw ArgumentError("csv: no data rows");
  Eigen::MatrixXd out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = values[r * cols + c];
  }
  return out;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& matrix) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write '" + path + "'");
  write_matrix_csv(out, matrix);
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& matrix) {
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      if (c > 0) out << ',';
      out << format_double(matrix(r, c));
    }
    out << '\n';
  }
}

nlohmann::ordered_json matrix_to_json(const Eigen::MatrixXd& matrix) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) row.push_back(matrix(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& doc) {
  if (!doc.is_array() || doc.empty()) throw ArgumentError("matrix: expected a non-empty array of rows");
  const std::size_t rows = doc.size();
  const std::size_t cols = doc[0].size();
  Eigen::MatrixXd out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!doc[r].is_array() || doc[r].size() != cols) throw ArgumentError("matrix: ragged rows");
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = doc[r][c].get<double>();
  }
  return out;
}

nlohmann::ordered_json vector_to_json(const Eigen::VectorXd& vector) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < vector.size(); ++i) out.push_back(vector(i));
  return out;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw ArgumentError("vector: expected an array");
  Eigen::VectorXd out(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) out(static_cast<Eigen::Index>(i)) = doc[i].get<double>();
  return out;
}

std::string format_double(double value) { return fmt::format("{}", value); }

}  // namespace fiem
