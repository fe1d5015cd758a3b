#include <gtest/gtest.h>

#include "support/gradcheck.hpp"

using eqmesh::testing::GradCase;

class GradientCheck : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const double err = GetParam().run();
  EXPECT_LT(err, 1e-4) << GetParam().name;
}

INSTANTIATE_TEST_SUITE_P(AllOpsAndLayers, GradientCheck, ::testing::ValuesIn(eqmesh::testing::gradient_cases()),
                         [](const ::testing::TestParamInfo<GradCase>& info) {
                           std::string n = info.param.name;
                           for (char& c : n)
                             if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
                           return n;
                         });
