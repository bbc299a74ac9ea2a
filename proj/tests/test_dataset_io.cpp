#include <doctest.h>

#include <sstream>

#include "fiem/dataset_io.hpp"
#include "fiem/errors.hpp"

using namespace fiem;

TEST_CASE("CSV round trip is exact") {
  Eigen::MatrixXd m(2, 3);
  m << 0.1, -2.5e-300, 3.0, 1.0 / 3.0, 1e20, -0.0;
  std::stringstream text;
  write_matrix_csv(text, m);
  const Eigen::MatrixXd back = read_matrix_csv(text);
  REQUIRE(back.rows() == 2);
  REQUIRE(back.cols() == 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) CHECK(back.data()[i] == m.data()[i]);
}

TEST_CASE("malformed CSV is rejected") {
  std::stringstream ragged("1,2\n3\n");
  CHECK_THROWS(read_matrix_csv(ragged));
  std::stringstream junk("1,abc\n");
  CHECK_THROWS(read_matrix_csv(junk));
}

TEST_CASE("JSON matrices are row-major") {
  Eigen::MatrixXd m(2, 2);
  m << 1, 2, 3, 4;
  const auto doc = matrix_to_json(m);
  CHECK(doc[0][1] == 2.0);
  CHECK(matrix_from_json(doc) == m);
  Eigen::VectorXd v(3);
  v << 1, 2, 3;
  CHECK(vector_from_json(vector_to_json(v)) == v);
}

TEST_CASE("doubles print in shortest round-trip form") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}
