#include <cmath>
#include <cstring>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "palsim/distortion_exposure.hpp"
#include "palsim/distortion_field.hpp"
#include "palsim/field_io.hpp"

using namespace palsim;

namespace {

double angle_3d(double x, double y, double xd, double yd) {
  Eigen::Vector3d a(x, y, 1.0), b(xd, yd, 1.0);
  // atan2 form stays accurate near zero, unlike acos of the normalised dot.
  return std::atan2(a.cross(b).norm(), a.dot(b)) * 180.0 / M_PI;
}

// Field of the affine map p -> A p + t.
DistortionField affine_field(const Eigen::Matrix2d& A, const Eigen::Vector2d& t, std::size_t n = 9) {
  DistortionField f(n, n, 1.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const Eigen::Vector2d p(f.x_at(c), f.y_at(r));
      const Eigen::Vector2d q = A * p + t;
      f.dx[f.index(c, r)] = q.x() - p.x();
      f.dy[f.index(c, r)] = q.y() - p.y();
    }
  return f;
}

struct QrShape {
  double mag, aspect, skew_deg, rot_deg;
};

// Householder QR with the diagonal of R made positive: J = Q U.
QrShape qr_shape(const Eigen::Matrix2d& J) {
  Eigen::HouseholderQR<Eigen::Matrix2d> qr(J);
  Eigen::Matrix2d Q = qr.householderQ();
  Eigen::Matrix2d U = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < 2; ++i)
    if (U(i, i) < 0) {
      U.row(i) *= -1;
      Q.col(i) *= -1;
    }
  const double a = U(0, 0), b = U(1, 1), s = U(0, 1);
  return {std::sqrt(a * b), a / b, std::atan(s / b) * 180.0 / M_PI, std::atan2(Q(1, 0), Q(0, 0)) * 180.0 / M_PI};
}

double central_mean_displacement(LensCondition c) {
  const Grid g = displacement_map(synth_pal_field(lens_spec_for(c), 101, 101, 1.0));
  double s = 0.0;
  int n = 0;
  for (std::size_t r = 25; r <= 75; ++r)
    for (std::size_t col = 25; col <= 75; ++col, ++n) s += g.at(col, r);
  return s / n;
}

}  // namespace

TEST(AngularDisplacement, KnownValues) {
  EXPECT_EQ(angular_displacement(0, 0, 0, 0), 0.0);
  EXPECT_NEAR(angular_displacement(0, 0, 1, 0), 45.0, 1e-12);
}

TEST(AngularDisplacement, MatchesVectorAngle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 20000; ++i) {
    const double x = u(rng), y = u(rng), xd = u(rng), yd = u(rng);
    EXPECT_NEAR(angular_displacement(x, y, xd, yd), angle_3d(x, y, xd, yd), 1e-9);
  }
}

TEST(AngularDisplacement, SymmetricAndRotationInvariant) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.5, 1.5), ang(-M_PI, M_PI);
  for (int i = 0; i < 5000; ++i) {
    const double x = u(rng), y = u(rng), xd = u(rng), yd = u(rng), a = ang(rng);
    const double d = angular_displacement(x, y, xd, yd);
    EXPECT_NEAR(d, angular_displacement(xd, yd, x, y), 1e-9);
    const double c = std::cos(a), s = std::sin(a);
    EXPECT_NEAR(d, angular_displacement(c * x - s * y, s * x + c * y, c * xd - s * yd, s * xd + c * yd), 1e-9);
  }
}

TEST(DisplacementMap, ZeroAndSingleCell) {
  DistortionField f(5, 4, 1.0);
  for (double v : displacement_map(f).values) EXPECT_EQ(v, 0.0);
  f.dx[f.index(2, 1)] = 0.3;
  const Grid g = displacement_map(f);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      if (c == 2 && r == 1)
        EXPECT_GT(g.at(c, r), 0.0);
      else
        EXPECT_EQ(g.at(c, r), 0.0);
    }
}

TEST(DisplacementMap, MatchesScalarLoopAndReference) {
  const DistortionField f = synth_pal_field(lens_spec_for(LensCondition::plus2_add2), 61, 47, 0.9);
  const Grid g = displacement_map(f);
  const Grid ref = reference::displacement_map(f);
  for (std::size_t r = 0; r < f.height_px; ++r)
    for (std::size_t c = 0; c < f.width_px; ++c) {
      const std::size_t k = f.index(c, r);
      const double x = f.x_at(c), y = f.y_at(r);
      EXPECT_NEAR(g.at(c, r), angular_displacement(x, y, x + f.dx[k], y + f.dy[k]), 1e-12);
      EXPECT_EQ(g.at(c, r), ref.at(c, r));
    }
}

TEST(Decompose, Identity) {
  const DecompositionMaps d = decompose(DistortionField(7, 5, 1.0));
  for (std::size_t i = 0; i < d.magnification.size(); ++i) {
    EXPECT_NEAR(d.magnification.values[i], 1.0, 1e-12);
    EXPECT_NEAR(d.aspect.values[i], 1.0, 1e-12);
    EXPECT_NEAR(d.skew_deg.values[i], 0.0, 1e-12);
    EXPECT_NEAR(d.rotation_deg.values[i], 0.0, 1e-12);
    EXPECT_EQ(d.displacement_deg.values[i], 0.0);
  }
}

TEST(Decompose, PureRotationAndScale) {
  const double alpha = 0.3;
  Eigen::Matrix2d R;
  R << std::cos(alpha), -std::sin(alpha), std::sin(alpha), std::cos(alpha);
  const DecompositionMaps d = decompose(affine_field(R, {0, 0}));
  for (std::size_t i = 0; i < d.magnification.size(); ++i) {
    EXPECT_NEAR(d.rotation_deg.values[i], alpha * 180.0 / M_PI, 1e-9);
    EXPECT_NEAR(d.magnification.values[i], 1.0, 1e-9);
    EXPECT_NEAR(d.aspect.values[i], 1.0, 1e-9);
    EXPECT_NEAR(d.skew_deg.values[i], 0.0, 1e-9);
  }
  const DecompositionMaps s = decompose(affine_field(1.3 * Eigen::Matrix2d::Identity(), {0.1, -0.2}));
  for (double m : s.magnification.values) EXPECT_NEAR(m, 1.3, 1e-9);
}

TEST(Decompose, RandomAffineMatchesQr) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(0.5, 1.8), off(-0.4, 0.4), ang(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Matrix2d U, R;
    U << pos(rng), off(rng), 0.0, pos(rng);
    const double th = ang(rng);
    R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    const Eigen::Matrix2d A = R * U;
    const QrShape want = qr_shape(A);
    const DecompositionMaps d = decompose(affine_field(A, {off(rng), off(rng)}));
    for (std::size_t i = 0; i < d.magnification.size(); ++i) {
      EXPECT_NEAR(d.magnification.values[i], want.mag, 1e-6);
      EXPECT_NEAR(d.aspect.values[i], want.aspect, 1e-6);
      EXPECT_NEAR(d.skew_deg.values[i], want.skew_deg, 1e-6);
      EXPECT_NEAR(d.rotation_deg.values[i], want.rot_deg, 1e-6);
    }
  }
}

TEST(Decompose, ParallelMatchesReference) {
  const DistortionField f = synth_pal_field(lens_spec_for(LensCondition::plano_add3), 41, 41, 1.0);
  const DecompositionMaps a = decompose(f), b = reference::decompose(f);
  EXPECT_EQ(a.degenerate_cells, b.degenerate_cells);
  for (std::size_t i = 0; i < a.magnification.size(); ++i) {
    const double x = a.magnification.values[i], y = b.magnification.values[i];
    EXPECT_TRUE((std::isnan(x) && std::isnan(y)) || x == y);
  }
}

TEST(Decompose, RejectsTinyGrid) { EXPECT_THROW(decompose(DistortionField(2, 5, 1.0)), ValidationError); }

TEST(SampleBilinear, NodesConstantsAndRamps) {
  Grid g(5, 4);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 5; ++c) g.at(c, r) = 3.0 * static_cast<double>(c) - 2.0 * static_cast<double>(r);
  const double e = 1.0;
  // Node (c, r) sits at x = -1 + c/2, y = 1 - 2r/3.
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 5; ++c)
      EXPECT_NEAR(*sample_bilinear(g, e, -1.0 + 0.5 * static_cast<double>(c), 1.0 - 2.0 * static_cast<double>(r) / 3.0),
                  g.at(c, r), 1e-12);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng), y = u(rng);
    const double col = (x + 1.0) * 2.0, row = (1.0 - y) * 1.5;
    EXPECT_NEAR(*sample_bilinear(g, e, x, y), 3.0 * col - 2.0 * row, 1e-12);
  }
  EXPECT_NEAR(*sample_bilinear(Grid(4, 4, 2.5), e, 0.1, -0.3), 2.5, 1e-15);
  EXPECT_FALSE(sample_bilinear(g, e, 1.01, 0.0).has_value());
  EXPECT_FALSE(sample_bilinear(g, e, 0.0, -1.2).has_value());
}

TEST(FieldCodec, SizesAndRoundTrip) {
  EXPECT_EQ(encode_field(DistortionField(1, 1, 1.0)).size(), 32u);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> dim(1, 12);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  for (int i = 0; i < 1000; ++i) {
    DistortionField f(static_cast<std::size_t>(dim(rng)), static_cast<std::size_t>(dim(rng)), 0.25 + u(rng) + 0.5);
    for (auto& v : f.dx) v = u(rng);
    for (auto& v : f.dy) v = u(rng);
    const auto bytes = encode_field(f);
    const DistortionField back = decode_field(bytes);
    EXPECT_EQ(back.dx, f.dx);
    EXPECT_EQ(back.dy, f.dy);
    EXPECT_EQ(back.domain_half_extent, f.domain_half_extent);
    EXPECT_EQ(encode_field(back), bytes);
  }
}

TEST(FieldCodec, ErrorsCarryOffsets) {
  auto bytes = encode_field(DistortionField(3, 2, 1.0));
  auto bad = bytes;
  bad[0] = 'X';
  try {
    decode_field(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.location(), 0u);
  }
  bad = bytes;
  bad.resize(bytes.size() - 3);
  EXPECT_THROW(decode_field(bad), FormatError);
  bad = bytes;
  const float nan = std::nanf("");
  std::memcpy(bad.data() + kFieldHeaderBytes + 8, &nan, 4);
  try {
    decode_field(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.location(), kFieldHeaderBytes + 8);
  }
}

TEST(Pfm, RoundTripKeepsRowOrder) {
  Grid g(3, 2);
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = static_cast<double>(i) + 0.5;
  const Grid back = decode_pfm(encode_pfm(g));
  EXPECT_EQ(back.width, 3u);
  EXPECT_EQ(back.values, g.values);
}

TEST(SynthField, ZeroPowerHasNoDisplacement) {
  LensSpec s;
  const Grid g = displacement_map(synth_pal_field(s, 31, 31, 1.0));
  for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(SynthField, PaperLensOrderings) {
  EXPECT_GT(central_mean_displacement(LensCondition::plus2_add2), central_mean_displacement(LensCondition::minus2_add2));

  const Grid a2 = displacement_map(synth_pal_field(lens_spec_for(LensCondition::plano_add2), 81, 81, 1.0));
  const Grid a3 = displacement_map(synth_pal_field(lens_spec_for(LensCondition::plano_add3), 81, 81, 1.0));
  EXPECT_GT(*std::max_element(a3.values.begin(), a3.values.end()), *std::max_element(a2.values.begin(), a2.values.end()));
  // Lower (near) half: higher addition dominates pointwise.
  for (std::size_t r = 41; r < 81; ++r)
    for (std::size_t c = 0; c < 81; ++c) EXPECT_GE(a3.at(c, r), a2.at(c, r)) << c << "," << r;
}

TEST(SynthField, RejectsInvalidSpecs) {
  LensSpec s;
  s.refractive_index = 1.0;
  EXPECT_THROW(synth_pal_field(s, 5, 5, 1.0), ValidationError);
  s = LensSpec{};
  s.addition_power = NAN;
  EXPECT_THROW(synth_pal_field(s, 5, 5, 1.0), ValidationError);
  EXPECT_THROW(synth_pal_field(LensSpec{}, 0, 5, 1.0), ValidationError);
}
