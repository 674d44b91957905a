// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "dpid/error.hpp"
#include "dpid/pid_core.hpp"

using namespace dpid;

namespace {

const double kLn2 = std::numbers::ln2;

// Independent enumeration used as the oracle: joint probabilities summed by
// brute force, pointwise atoms computed with the min arguments reordered.
struct BruteAtoms {
  double r, u1, u2, s;
};

BruteAtoms brute_event(const DiscreteJoint& j, std::size_t a, std::size_t b, std::size_t c) {
  double p1 = 0, p2 = 0, px = 0, p1x = 0, p2x = 0, p12 = 0;
  for (std::size_t y1 = 0; y1 < j.n1(); ++y1)
    for (std::size_t y2 = 0; y2 < j.n2(); ++y2)
      for (std::size_t x = 0; x < j.nx(); ++x) {
        const double p = j.p(y1, y2, x);
        if (y1 == a) p1 += p;
        if (y2 == b) p2 += p;
        if (x == c) px += p;
        if (y1 == a && x == c) p1x += p;
        if (y2 == b && x == c) p2x += p;
        if (y1 == a && y2 == b) p12 += p;
      }
  const double i1 = std::log(p1x / (p1 * px));
  const double i2 = std::log(p2x / (p2 * px));
  const double i12 = std::log(j.p(a, b, c) / (p12 * px));
  const double h1 = -std::log(p1), h2 = -std::log(p2);
  const double r = std::min(h2, h1) - std::min(h2 - i2, h1 - i1);
  return {r, i1 - r, i2 - r, i12 - r - (i1 - r) - (i2 - r)};
}

}  // namespace

TEST_SUITE("pid_core") {
  TEST_CASE("redundancy on gate events") {
    CHECK(redundancy_pointwise({kLn2, kLn2, kLn2, kLn2, 0.0}) == doctest::Approx(kLn2).epsilon(1e-15));
    CHECK(redundancy_pointwise({kLn2, kLn2, 0.0, 0.0, 0.0}) == 0.0);
    for (double c : {0.0, 0.3, 2.0}) {
      for (double m : {-1.0, 0.0, c}) {
        CHECK(redundancy_pointwise({c, c, m, m, 0.0}) == doctest::Approx(m).epsilon(1e-15));
      }
    }
  }

  TEST_CASE("decomposition examples") {
    auto atoms = [](PointwiseInputs in) { return decompose_pointwise(in); };
    const PidAtoms x = atoms({kLn2, kLn2, 0.0, 0.0, kLn2});
    CHECK(x.redundancy == 0.0);
    CHECK(x.unique1 == 0.0);
    CHECK(x.unique2 == 0.0);
    CHECK(x.synergy == doctest::Approx(kLn2));
    const PidAtoms r = atoms({kLn2, kLn2, kLn2, kLn2, kLn2});
    CHECK(r.redundancy == doctest::Approx(kLn2));
    CHECK(r.unique1 == 0.0);
    CHECK(r.unique2 == 0.0);
    CHECK(r.synergy == doctest::Approx(0.0));
    const PidAtoms z = atoms({0.4, 1.1, 0.0, 0.0, 0.0});
    CHECK(z.redundancy == 0.0);
    CHECK(z.unique1 == 0.0);
    CHECK(z.unique2 == 0.0);
    CHECK(z.synergy == 0.0);
    const PidAtoms u = atoms({kLn2, kLn2, kLn2, 0.0, kLn2});
    CHECK(u.redundancy == doctest::Approx(kLn2));
    CHECK(u.unique1 == doctest::Approx(0.0));
    CHECK(u.unique2 == doctest::Approx(-kLn2));
    CHECK(u.synergy == doctest::Approx(kLn2));
  }

  TEST_CASE("validation rejects bad inputs") {
    CHECK_THROWS_AS(decompose_pointwise({-0.1, 1.0, 0.0, 0.0, 0.0}), DomainError);
    CHECK_THROWS_AS(decompose_pointwise({0.1, 1.0, NAN, 0.0, 0.0}), DomainError);
    CHECK_THROWS_AS(decompose_pointwise({0.1, INFINITY, 0.0, 0.0, 0.0}), DomainError);
  }

  TEST_CASE("additivity, symmetry and self-redundancy on random inputs") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> h(0.0, 5.0), i(-3.0, 3.0);
    for (int n = 0; n < 2000; ++n) {
      const PointwiseInputs in{h(rng), h(rng), i(rng), i(rng), i(rng)};
      const PidAtoms a = decompose_pointwise(in);
      const double scale = std::max(1.0, std::abs(in.mi_joint));
      CHECK(std::abs(a.total() - in.mi_joint) <= 1e-12 * scale);
      const PidAtoms b = decompose_pointwise({in.neg_log_p2, in.neg_log_p1, in.mi2, in.mi1, in.mi_joint});
      CHECK(b.unique1 == a.unique2);
      CHECK(b.unique2 == a.unique1);
      CHECK(b.redundancy == a.redundancy);
      CHECK(b.synergy == doctest::Approx(a.synergy).epsilon(1e-12));
      const double reordered =
          std::min(in.neg_log_p2, in.neg_log_p1) - std::min(in.neg_log_p2 - in.mi2, in.neg_log_p1 - in.mi1);
      CHECK(a.redundancy == reordered);
      const PidAtoms self = decompose_pointwise({in.neg_log_p1, in.neg_log_p1, in.mi1, in.mi1, in.mi_joint});
      CHECK(self.redundancy == doctest::Approx(in.mi1).epsilon(1e-12));
      CHECK(self.unique1 == doctest::Approx(0.0));
      CHECK(self.unique2 == doctest::Approx(0.0));
    }
  }

  TEST_CASE("field decomposition") {
    const Shape s{1, 2, 3};
    const PidFields xf = decompose_field(kLn2, kLn2, LatentField(s, 0.0), LatentField(s, 0.0), LatentField(s, kLn2));
    for (std::size_t i = 0; i < s.count(); ++i) {
      CHECK(xf.redundancy[i] == 0.0);
      CHECK(xf.unique1[i] == 0.0);
      CHECK(xf.unique2[i] == 0.0);
      CHECK(xf.synergy[i] == doctest::Approx(kLn2));
    }
    const PidFields one = decompose_field(0.3, 0.9, LatentField::scalar(0.2), LatentField::scalar(0.5),
                                          LatentField::scalar(0.6));
    const PidAtoms p = decompose_pointwise({0.3, 0.9, 0.2, 0.5, 0.6});
    CHECK(one.redundancy[0] == p.redundancy);
    CHECK(one.unique1[0] == p.unique1);
    CHECK(one.unique2[0] == p.unique2);
    CHECK(one.synergy[0] == p.synergy);
    const PidFields zero = decompose_field(1.0, 2.0, LatentField(s), LatentField(s), LatentField(s));
    for (std::size_t i = 0; i < s.count(); ++i) {
      CHECK(zero.redundancy[i] == 0.0);
      CHECK(zero.synergy[i] == 0.0);
    }
    CHECK_THROWS_AS(decompose_field(1.0, 1.0, LatentField(s), LatentField(Shape{1, 3, 2}), LatentField(s)),
                    ShapeError);
  }

  TEST_CASE("gate oracles") {
    const OracleResult x = discrete_pid_oracle(xor_gate());
    CHECK(x.expected.synergy == doctest::Approx(kLn2).epsilon(1e-12));
    CHECK(std::abs(x.expected.redundancy) <= 1e-12);
    CHECK(std::abs(x.expected.unique1) <= 1e-12);
    CHECK(std::abs(x.expected.unique2) <= 1e-12);
    CHECK(x.events.size() == 4);
    const OracleResult r = discrete_pid_oracle(rdn_gate());
    CHECK(r.expected.redundancy == doctest::Approx(kLn2).epsilon(1e-12));
    CHECK(std::abs(r.expected.synergy) <= 1e-12);
    const OracleResult u = discrete_pid_oracle(unq_gate());
    CHECK(u.expected.redundancy == doctest::Approx(kLn2));
    CHECK(u.expected.unique2 == doctest::Approx(-kLn2));
    CHECK(u.expected.synergy == doctest::Approx(kLn2));
  }

  TEST_CASE("independent target gives zero atoms") {
    std::vector<double> t;
    const double py[4] = {0.1, 0.2, 0.3, 0.4};
    const double px[3] = {0.5, 0.25, 0.25};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 3; ++c) t.push_back(py[a * 2 + b] * px[c]);
    const OracleResult o = discrete_pid_oracle(DiscreteJoint(2, 2, 3, t));
    CHECK(std::abs(o.expected.redundancy) < 1e-12);
    CHECK(std::abs(o.expected.unique1) < 1e-12);
    CHECK(std::abs(o.expected.unique2) < 1e-12);
    CHECK(std::abs(o.expected.synergy) < 1e-12);
  }

  TEST_CASE("oracle matches brute-force enumeration on random joints") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n1 = 2 + trial % 3, n2 = 2 + (trial / 3) % 3, nx = 2 + (trial / 9) % 3;
      std::vector<double> t(n1 * n2 * nx);
      double total = 0.0;
      for (auto& v : t) total += (v = u(rng) < 0.15 ? 0.0 : u(rng));
      if (t.back() == 0.0) total += (t.back() = 0.5);
      for (auto& v : t) v /= total;
      double fix = 0.0;
      for (double v : t) fix += v;
      t.back() += 1.0 - fix;
      const DiscreteJoint j(n1, n2, nx, t);
      const OracleResult o = discrete_pid_oracle(j);
      double er = 0, e1 = 0, e2 = 0, es = 0;
      for (std::size_t a = 0; a < n1; ++a)
        for (std::size_t b = 0; b < n2; ++b)
          for (std::size_t c = 0; c < nx; ++c) {
            const double p = j.p(a, b, c);
            if (p <= 0.0) continue;
            const BruteAtoms atoms = brute_event(j, a, b, c);
            er += p * atoms.r;
            e1 += p * atoms.u1;
            e2 += p * atoms.u2;
            es += p * atoms.s;
          }
      CHECK(o.expected.redundancy == doctest::Approx(er).epsilon(1e-10));
      CHECK(o.expected.unique1 == doctest::Approx(e1).epsilon(1e-10));
      CHECK(o.expected.unique2 == doctest::Approx(e2).epsilon(1e-10));
      CHECK(o.expected.synergy == doctest::Approx(es).epsilon(1e-10));
    }
  }

  TEST_CASE("joint validation") {
    CHECK_THROWS_AS(DiscreteJoint(2, 2, 2, std::vector<double>(7, 1.0 / 7)), PreconditionError);
    CHECK_THROWS_AS(DiscreteJoint(1, 1, 2, {0.6, 0.6}), DomainError);
    CHECK_THROWS_AS(DiscreteJoint(1, 1, 2, {1.2, -0.2}), DomainError);
  }

  TEST_CASE("oracle csv") {
    std::ostringstream out;
    write_oracle_csv(out, discrete_pid_oracle(xor_gate()));
    const std::string s = out.str();
    CHECK(s.rfind("y1,y2,x,p,i1,i2,i_joint,r,u1,u2,s\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 5);
  }
}
