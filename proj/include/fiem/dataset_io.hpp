#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>

namespace fiem {

// Header-free CSV, one row per example, decimal floats.
Eigen::MatrixXd read_matrix_csv(const std::string& path);
Eigen::MatrixXd read_matrix_csv(std::istream& in);
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& matrix);
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& matrix);

// Row-major nested arrays.
nlohmann::ordered_json matrix_to_json(const Eigen::MatrixXd& matrix);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& doc);
nlohmann::ordered_json vector_to_json(const Eigen::VectorXd& vector);
Eigen::VectorXd vector_from_json(const nlohmann::json& doc);

// Shortest representation that reads back to the same double.
std::string format_double(double value);

}  // namespace fiem
