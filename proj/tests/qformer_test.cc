// Copyright 2026 The emoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "emoalign/qformer.h"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "test_util.h"

namespace emoalign {
namespace {

using testing::RandomMatrix;

QFormerConfig Small() {
  QFormerConfig c;
  c.n_queries = 4;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_encoder = 6;
  c.d_decoder = 10;
  return c;
}

TEST(QFormerInitTest, DeterministicWithZeroGrads) {
  const auto a = InitQFormer(Small(), 3);
  const auto b = InitQFormer(Small(), 3);
  EXPECT_EQ(ParamChecksum(a.params), ParamChecksum(b.params));
  EXPECT_NE(ParamChecksum(InitQFormer(Small(), 4).params), ParamChecksum(a.params));
  VisitTensors(a.grads, "", [](const std::string& name, const Matrix& t) {
    EXPECT_EQ(t.cwiseAbs().maxCoeff(), 0.0) << name;
  });
}

TEST(QFormerInitTest, GradBuffersMatchShapes) {
  const auto s = InitQFormer(Small(), 3);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> p;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> g;
  VisitTensors(s.params, "", [&](const std::string&, const Matrix& t) {
    p.emplace_back(t.rows(), t.cols());
  });
  VisitTensors(s.grads, "", [&](const std::string&, const Matrix& t) {
    g.emplace_back(t.rows(), t.cols());
  });
  EXPECT_EQ(p, g);
  EXPECT_EQ(s.params.queries.rows(), 4);
  EXPECT_EQ(s.params.decoder_proj.weight.cols(), 10);
}

TEST(QFormerInitTest, Preconditions) {
  QFormerConfig c = Small();
  c.n_queries = 0;
  EXPECT_THROW(InitQFormer(c, 1), ValidationError);
  c = Small();
  c.n_heads = 3;
  EXPECT_THROW(InitQFormer(c, 1), ValidationError);
}

TEST(QFormerForwardTest, OutputShapeIndependentOfLength) {
  const auto s = InitQFormer(Small(), 3);
  Rng rng(1);
  for (int t : {1, 5, 50}) {
    const Matrix out = QFormerForward(s.params, RandomMatrix(rng, t, 6), nullptr);
    EXPECT_EQ(out.rows(), 4);
    EXPECT_EQ(out.cols(), 8);
  }
  EXPECT_THROW(QFormerForward(s.params, Matrix(0, 6), nullptr), ValidationError);
  EXPECT_THROW(QFormerForward(s.params, Matrix::Zero(3, 5), nullptr), ValidationError);
}

TEST(QFormerForwardTest, InvariantToFeaturePermutation) {
  const auto s = InitQFormer(Small(), 3);
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix x = RandomMatrix(rng, 9, 6);
    std::vector<int> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    rng.Shuffle(perm);
    Matrix px(9, 6);
    for (int i = 0; i < 9; ++i) px.row(i) = x.row(perm[i]);
    const Matrix a = QFormerForward(s.params, x, nullptr);
    const Matrix b = QFormerForward(s.params, px, nullptr);
    EXPECT_TRUE(a.isApprox(b, 1e-12));
    EXPECT_TRUE(PoolQueries(a).unit.isApprox(PoolQueries(b).unit, 1e-12));
  }
}

TEST(QFormerForwardTest, ZeroFeaturesCachedEqualsRecomputed) {
  const auto s = InitQFormer(Small(), 3);
  const Matrix zeros = Matrix::Zero(7, 6);
  QFormerCache cache;
  const Matrix a = QFormerForward(s.params, zeros, &cache);
  EXPECT_TRUE(cache.valid);
  EXPECT_EQ(QFormerForward(s.params, zeros, nullptr), a);
  // With zero features and a zero adapter bias every memory row is identical,
  // so the length of the memory does not matter.
  EXPECT_TRUE(QFormerForward(s.params, Matrix::Zero(2, 6), nullptr).isApprox(a, 1e-12));
}

TEST(PoolTest, Examples) {
  Matrix same(3, 2);
  same << 3, 4, 3, 4, 3, 4;
  const auto p = PoolQueries(same);
  EXPECT_NEAR(p.unit[0], 0.6, 1e-15);
  EXPECT_NEAR(p.unit[1], 0.8, 1e-15);
  EXPECT_NEAR(p.norm, 5.0, 1e-15);
  Matrix two(2, 2);
  two << 2, 0, 0, 2;
  const auto q = PoolQueries(two);
  EXPECT_NEAR(q.unit[0], std::sqrt(2.0) / 2, 1e-15);
  EXPECT_NEAR(q.unit[1], std::sqrt(2.0) / 2, 1e-15);
  Matrix cancel(2, 2);
  cancel << 1, 1, -1, -1;
  EXPECT_THROW(PoolQueries(cancel), NumericError);
}

TEST(PoolTest, UnitNormAndScaleInvariance) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix q = RandomMatrix(rng, 5, 7);
    const auto p = PoolQueries(q);
    EXPECT_NEAR(p.unit.norm(), 1.0, 1e-12);
    EXPECT_TRUE(PoolQueries(Matrix(q * 3.7)).unit.isApprox(p.unit, 1e-12));
  }
}

TEST(PoolTest, BackwardMatchesDifferences) {
  Rng rng(4);
  Matrix q = RandomMatrix(rng, 3, 4);
  const Vector w = RandomMatrix(rng, 4, 1);
  const auto p = PoolQueries(q);
  const Matrix analytic = PoolQueriesBackward(p, 3, w);
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    Matrix up = q;
    Matrix down = q;
    up.data()[i] += 1e-6;
    down.data()[i] -= 1e-6;
    const double numeric =
        (PoolQueries(up).unit.dot(w) - PoolQueries(down).unit.dot(w)) / 2e-6;
    EXPECT_NEAR(analytic.data()[i], numeric, 1e-8);
  }
}

// Scalar probe used for gradient checks: <weights, QFormerForward(x)>.
double Probe(const QFormerParams& p, const Matrix& x, const Matrix& w) {
  return (QFormerForward(p, x, nullptr).array() * w.array()).sum();
}

TEST(QFormerBackwardTest, MatchesFiniteDifferencesOnEveryTensor) {
  auto s = InitQFormer(Small(), 5);
  Rng rng(5);
  const Matrix x = RandomMatrix(rng, 6, 6);
  const Matrix w = RandomMatrix(rng, 4, 8);
  QFormerCache cache;
  QFormerForward(s.params, x, &cache);
  QFormerBackward(s.params, cache, w, &s.grads);

  std::vector<Matrix*> params;
  std::vector<const Matrix*> grads;
  std::vector<std::string> names;
  VisitTensors(s.params, "", [&](const std::string& n, Matrix& t) {
    params.push_back(&t);
    names.push_back(n);
  });
  VisitTensors(s.grads, "", [&](const std::string&, const Matrix& t) { grads.push_back(&t); });
  const double eps = 1e-5;
  for (size_t k = 0; k < params.size(); ++k) {
    if (names[k].starts_with(".decoder_proj")) continue;  // not on this path
    double err = 0.0;
    double scale = 0.0;
    for (Eigen::Index i = 0; i < params[k]->size(); ++i) {
      double& v = params[k]->data()[i];
      const double saved = v;
      v = saved + eps;
      const double up = Probe(s.params, x, w);
      v = saved - eps;
      const double down = Probe(s.params, x, w);
      v = saved;
      const double numeric = (up - down) / (2 * eps);
      err = std::max(err, std::abs(numeric - grads[k]->data()[i]));
      scale = std::max({scale, std::abs(numeric), std::abs(grads[k]->data()[i])});
    }
    if (scale > 1e-12) {
      EXPECT_LT(err / scale, 1e-6) << names[k];
    }
  }
}

TEST(QFormerBackwardTest, LinearityAndAccumulation) {
  auto s = InitQFormer(Small(), 6);
  Rng rng(6);
  const Matrix x = RandomMatrix(rng, 5, 6);
  const Matrix w = RandomMatrix(rng, 4, 8);
  QFormerCache cache;
  QFormerForward(s.params, x, &cache);

  QFormerBackward(s.params, cache, Matrix::Zero(4, 8), &s.grads);
  VisitTensors(s.grads, "", [](const std::string& name, const Matrix& t) {
    EXPECT_EQ(t.cwiseAbs().maxCoeff(), 0.0) << name;
  });

  QFormerBackward(s.params, cache, w, &s.grads);
  const QFormerParams once = s.grads;
  QFormerBackward(s.params, cache, w, &s.grads);
  std::vector<const Matrix*> first;
  VisitTensors(once, "", [&](const std::string&, const Matrix& t) { first.push_back(&t); });
  size_t k = 0;
  VisitTensors(s.grads, "", [&](const std::string& name, const Matrix& t) {
    EXPECT_EQ(t, Matrix(2.0 * *first[k++])) << name;
  });

  ZeroGrads(s);
  VisitTensors(s.grads, "", [](const std::string&, const Matrix& t) {
    EXPECT_EQ(t.cwiseAbs().maxCoeff(), 0.0);
  });
}

TEST(QFormerBackwardTest, RequiresRetainedForward) {
  auto s = InitQFormer(Small(), 6);
  QFormerCache empty;
  EXPECT_THROW(QFormerBackward(s.params, empty, Matrix::Zero(4, 8), &s.grads),
               std::logic_error);
}

}  // namespace
}  // namespace emoalign
