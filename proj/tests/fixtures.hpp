#pragma once
// Small models shared by the unit and acceptance tests.

#include "switchsynth/model.hpp"

namespace fixture {

using switchsynth::Matrix;
using switchsynth::Vector;

/// Two-state, one-input, two-mode system; mode 1 for 1 s then mode 2 for 1 s.
inline switchsynth::SwitchedLinearModel toy_model(double sigma = 0.05) {
  switchsynth::SwitchedLinearModel m;
  m.name = "toy";
  m.states = {{"x1", "", false}, {"x2", "", false}};
  switchsynth::InputInfo u;
  u.name = "u";
  m.inputs = {u};
  switchsynth::Mode a;
  a.id = 1;
  a.A.resize(2, 2);
  a.A << -1.0, 2.0, -2.0, -1.0;
  a.B.resize(2, 1);
  a.B << 0.0, 1.0;
  a.Sigma = sigma * Matrix::Identity(2, 2);
  switchsynth::Mode b = a;
  b.id = 2;
  b.A << -2.0, 0.5, 0.0, -0.5;
  b.B << 1.0, 0.5;
  m.modes = {a, b};
  m.transitions = {{1, 2}};
  m.schedule = {{1, 1.0}, {2, 1.0}};
  m.x0 = Vector(2);
  m.x0 << 1.0, 0.0;
  m.r0 = 1e-3;
  m.validate();
  return m;
}

}  // namespace fixture
