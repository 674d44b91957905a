// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pointwise partial information decomposition of two sources about one target.
// All quantities are in nats. Atoms are signed and never clamped here.

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "dpid/latent_field.hpp"

namespace dpid {

struct PointwiseInputs {
  double neg_log_p1 = 0.0;  ///< -log p(y1), or -log p(y1|context) for the conditional variant
  double neg_log_p2 = 0.0;
  double mi1 = 0.0;         ///< i(y1; x)
  double mi2 = 0.0;         ///< i(y2; x)
  double mi_joint = 0.0;    ///< i(y1, y2; x)
};

struct PidAtoms {
  double redundancy = 0.0;
  double unique1 = 0.0;
  double unique2 = 0.0;
  double synergy = 0.0;

  double total() const { return redundancy + unique1 + unique2 + synergy; }
};

/// Throws DomainError on non-finite fields or a negative -log p.
void validate(const PointwiseInputs& in);

/// r = min_i[-log p(y_i)] - min_i[-log p(y_i) - i(y_i; x)].
/// The second term is the misinformative part, -log p(y_i | x) rewritten
/// through Bayes so that only the phrase prior and the MI are needed.
double redundancy_pointwise(const PointwiseInputs& in);

/// Redundancy, the two uniqueness terms and synergy as the residual of
/// i(y1, y2; x) after the other three.
PidAtoms decompose_pointwise(const PointwiseInputs& in);

struct PidFields {
  LatentField redundancy;
  LatentField unique1;
  LatentField unique2;
  LatentField synergy;
};

/// Element-wise decompose_pointwise with shared scalar priors.
PidFields decompose_field(double neg_log_p1, double neg_log_p2, const LatentField& mi1,
                          const LatentField& mi2, const LatentField& mi_joint);

/// Probability table p(y1, y2, x) over finite supports, indexed [y1][y2][x].
class DiscreteJoint {
 public:
  DiscreteJoint(std::size_t n1, std::size_t n2, std::size_t nx, std::vector<double> table);

  std::size_t n1() const { return n1_; }
  std::size_t n2() const { return n2_; }
  std::size_t nx() const { return nx_; }
  double p(std::size_t y1, std::size_t y2, std::size_t x) const {
    return table_[(y1 * n2_ + y2) * nx_ + x];
  }

 private:
  std::size_t n1_, n2_, nx_;
  std::vector<double> table_;
};

/// Uniform independent input bits with x = y1 xor y2.
DiscreteJoint xor_gate();
/// y1 = y2 = x, one uniform bit.
DiscreteJoint rdn_gate();
/// x = y1, with y2 an independent uniform bit.
DiscreteJoint unq_gate();

struct OracleEvent {
  std::size_t y1, y2, x;
  double p;
  PointwiseInputs inputs;
  PidAtoms atoms;
};

struct OracleResult {
  PidAtoms expected;
  double expected_mi1 = 0.0;
  double expected_mi2 = 0.0;
  double expected_mi_joint = 0.0;
  std::vector<OracleEvent> events;
};

/// Exact enumeration over every event with positive mass.
OracleResult discrete_pid_oracle(const DiscreteJoint& joint);

/// Columns: y1,y2,x,p,i1,i2,i_joint,r,u1,u2,s.
void write_oracle_csv(std::ostream& out, const OracleResult& result);

}  // namespace dpid
