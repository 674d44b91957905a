// SPDX-License-Identifier: Apache-2.0
#include "dpid/pid_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "dpid/error.hpp"

namespace dpid {

void validate(const PointwiseInputs& in) {
  const double fields[] = {in.neg_log_p1, in.neg_log_p2, in.mi1, in.mi2, in.mi_joint};
  for (double v : fields) {
    if (!std::isfinite(v)) throw DomainError("pid: non-finite pointwise input");
  }
  if (in.neg_log_p1 < 0.0 || in.neg_log_p2 < 0.0) {
    throw DomainError("pid: -log p must be >= 0 (probability above 1)");
  }
}

double redundancy_pointwise(const PointwiseInputs& in) {
  validate(in);
  const double informative = std::min(in.neg_log_p1, in.neg_log_p2);
  const double misinformative = std::min(in.neg_log_p1 - in.mi1, in.neg_log_p2 - in.mi2);
  return informative - misinformative;
}

PidAtoms decompose_pointwise(const PointwiseInputs& in) {
  PidAtoms atoms;
  atoms.redundancy = redundancy_pointwise(in);
  atoms.unique1 = in.mi1 - atoms.redundancy;
  atoms.unique2 = in.mi2 - atoms.redundancy;
  atoms.synergy = in.mi_joint - atoms.redundancy - atoms.unique1 - atoms.unique2;
  return atoms;
}

PidFields decompose_field(double neg_log_p1, double neg_log_p2, const LatentField& mi1,
                          const LatentField& mi2, const LatentField& mi_joint) {
  require_same_shape(mi1, mi2, "decompose_field: mi2_field");
  require_same_shape(mi1, mi_joint, "decompose_field: mi_joint_field");
  PidFields out{LatentField(mi1.shape()), LatentField(mi1.shape()), LatentField(mi1.shape()),
                LatentField(mi1.shape())};
  for (std::size_t i = 0; i < mi1.size(); ++i) {
    const PidAtoms a = decompose_pointwise({neg_log_p1, neg_log_p2, mi1[i], mi2[i], mi_joint[i]});
    out.redundancy[i] = a.redundancy;
    out.unique1[i] = a.unique1;
    out.unique2[i] = a.unique2;
    out.synergy[i] = a.synergy;
  }
  return out;
}

DiscreteJoint::DiscreteJoint(std::size_t n1, std::size_t n2, std::size_t nx,
                             std::vector<double> table)
    : n1_(n1), n2_(n2), nx_(nx), table_(std::move(table)) {
  if (n1 == 0 || n2 == 0 || nx == 0) throw PreconditionError("DiscreteJoint: empty support");
  if (table_.size() != n1 * n2 * nx) {
    throw PreconditionError("DiscreteJoint: table has " + std::to_string(table_.size()) +
                            " entries, expected " + std::to_string(n1 * n2 * nx));
  }
  double total = 0.0;
  for (double p : table_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("DiscreteJoint: negative or non-finite entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("DiscreteJoint: mass does not sum to 1");
}

namespace {

DiscreteJoint two_bit_gate(auto&& target) {
  std::vector<double> table(8, 0.0);
  for (std::size_t y1 = 0; y1 < 2; ++y1) {
    for (std::size_t y2 = 0; y2 < 2; ++y2) table[(y1 * 2 + y2) * 2 + target(y1, y2)] = 0.25;
  }
  return DiscreteJoint(2, 2, 2, std::move(table));
}

}  // namespace

DiscreteJoint xor_gate() {
  return two_bit_gate([](std::size_t a, std::size_t b) { return a ^ b; });
}

DiscreteJoint rdn_gate() {
  return DiscreteJoint(2, 2, 2, {0.5, 0, 0, 0, 0, 0, 0, 0.5});
}

DiscreteJoint unq_gate() {
  return two_bit_gate([](std::size_t a, std::size_t) { return a; });
}

OracleResult discrete_pid_oracle(const DiscreteJoint& joint) {
  const std::size_t n1 = joint.n1(), n2 = joint.n2(), nx = joint.nx();
  std::vector<double> p1(n1, 0.0), p2(n2, 0.0), px(nx, 0.0), p12(n1 * n2, 0.0);
  std::vector<double> p1x(n1 * nx, 0.0), p2x(n2 * nx, 0.0);
  for (std::size_t a = 0; a < n1; ++a) {
    for (std::size_t b = 0; b < n2; ++b) {
      for (std::size_t x = 0; x < nx; ++x) {
        const double p = joint.p(a, b, x);
        p1[a] += p;
        p2[b] += p;
        px[x] += p;
        p12[a * n2 + b] += p;
        p1x[a * nx + x] += p;
        p2x[b * nx + x] += p;
      }
    }
  }

  OracleResult result;
  for (std::size_t a = 0; a < n1; ++a) {
    for (std::size_t b = 0; b < n2; ++b) {
      for (std::size_t x = 0; x < nx; ++x) {
        const double p = joint.p(a, b, x);
        if (p <= 0.0) continue;
        PointwiseInputs in;
        in.neg_log_p1 = -std::log(p1[a]);
        in.neg_log_p2 = -std::log(p2[b]);
        in.mi1 = std::log(p1x[a * nx + x]) - std::log(p1[a]) - std::log(px[x]);
        in.mi2 = std::log(p2x[b * nx + x]) - std::log(p2[b]) - std::log(px[x]);
        in.mi_joint = std::log(p) - std::log(p12[a * n2 + b]) - std::log(px[x]);
        const PidAtoms atoms = decompose_pointwise(in);
        result.events.push_back({a, b, x, p, in, atoms});
        result.expected.redundancy += p * atoms.redundancy;
        result.expected.unique1 += p * atoms.unique1;
        result.expected.unique2 += p * atoms.unique2;
        result.expected.synergy += p * atoms.synergy;
        result.expected_mi1 += p * in.mi1;
        result.expected_mi2 += p * in.mi2;
        result.expected_mi_joint += p * in.mi_joint;
      }
    }
  }
  return result;
}

void write_oracle_csv(std::ostream& out, const OracleResult& result) {
  out << "y1,y2,x,p,i1,i2,i_joint,r,u1,u2,s\n";
  char buf[512];
  for (const auto& e : result.events) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  e.y1, e.y2, e.x, e.p, e.inputs.mi1, e.inputs.mi2, e.inputs.mi_joint,
                  e.atoms.redundancy, e.atoms.unique1, e.atoms.unique2, e.atoms.synergy);
    out << buf;
  }
}

}  // namespace dpid
