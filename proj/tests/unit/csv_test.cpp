/*
 * Copyright 2026 The fairshift Authors.
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


#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fairshift/csv.hpp"

namespace fairshift {
namespace {

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return parse_csv(in);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

TEST(Csv, SaveLoadRoundTripsToFullPrecision) {
  Matrix x(3, 2);
  x << 1.0 / 3.0, -2.5e-17, 1e300, std::acos(-1.0), -0.0, 123456.789;
  Vector y(3);
  y << 0.1, 0.2, 0.3;
  Vector z(3);
  z << 1.0, 0.0, 1.0;
  const Dataset d(x, Domain::Target, y, z, LabelRole::HeldOut);
  const auto path = std::filesystem::temp_directory_path() / "fairshift_csv_roundtrip.csv";
  save_csv(d, path.string());
  const Dataset back = load_csv(path.string());
  std::filesystem::remove(path);
  ASSERT_EQ(back.rows(), 3);
  ASSERT_EQ(back.dim(), 2);
  EXPECT_LE((back.features() - x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((back.labels() - y).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(back.protected_attribute() == z);
  EXPECT_EQ(back.domain(), Domain::Target);
  EXPECT_EQ(back.label_role(), LabelRole::HeldOut);
}

TEST(Csv, WriteIsExactForShortestRepresentation) {
  Matrix x(1, 1);
  x << 0.1 + 0.2;
  const Dataset d(x);
  std::ostringstream out;
  write_csv(d, out);
  const Dataset back = parse(out.str());
  EXPECT_EQ(back.features()(0, 0), x(0, 0));
}

TEST(Csv, HeaderOnlyGivesEmptyDatasetWithInferredDimension) {
  const Dataset d = parse("x1,x2,x3,y\n");
  EXPECT_EQ(d.rows(), 0);
  EXPECT_EQ(d.dim(), 3);
  EXPECT_TRUE(d.has_labels());
}

TEST(Csv, ParsesScientificNotationAndDomain) {
  const Dataset d = parse("x1,y,domain\n1e-3,+2.5E2,source\n-4,0,source\n");
  EXPECT_DOUBLE_EQ(d.features()(0, 0), 1e-3);
  EXPECT_DOUBLE_EQ(d.labels()(0), 250.0);
  EXPECT_EQ(d.domain(), Domain::Source);
}

TEST(Csv, NanCellIsRejectedAtItsLine) {
  const std::string err = error_of("x1,x2\n1,2\nNaN,3\n");
  EXPECT_NE(err.find("line 3"), std::string::npos) << err;
}

TEST(Csv, RaggedRowNamesLine) {
  const std::string err = error_of("x1,x2,y\n1,2,3\n4,5\n");
  EXPECT_NE(err.find("line 3"), std::string::npos) << err;
  EXPECT_NE(err.find("ragged"), std::string::npos) << err;
}

TEST(Csv, NonNumericCellNamesLine) {
  const std::string err = error_of("x1\n1\n2\nabc\n");
  EXPECT_NE(err.find("line 4"), std::string::npos) << err;
}

TEST(Csv, MalformedHeaderIsRejected) {
  EXPECT_NE(error_of("a,b\n1,2\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("x1,x3\n1,2\n").find("malformed header"), std::string::npos);
  EXPECT_NE(error_of("").find("missing header"), std::string::npos);
}

TEST(Csv, InvalidProtectedAndDomainCellsAreRejected) {
  EXPECT_NE(error_of("x1,z\n1,2\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("x1,domain\n1,other\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("x1,domain\n1,source\n2,target\n").find("line 3"), std::string::npos);
}

TEST(Csv, MissingFileIsAParseError) {
  EXPECT_THROW(load_csv("/nonexistent/fairshift/none.csv"), ParseError);
}

}  // namespace
}  // namespace fairshift
