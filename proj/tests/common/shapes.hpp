#pragma once

// Hand-built programs shared by unit and acceptance tests.

#include <numbers>

#include "gencad/cad_lang.hpp"

namespace gencad::testing {

inline CadCommand plain_extrude(double e1, BooleanOp op = BooleanOp::New, double px = 0.0, double py = 0.0,
                                double pz = 0.0, double s = 1.0) {
  return CadCommand::extrude(0.0, 0.0, 0.0, px, py, pz, s, e1, 0.0, op, Sidedness::One);
}

inline std::vector<CadCommand> square_loop(double side = 1.0) {
  return {CadCommand::sol(), CadCommand::line(side, 0.0), CadCommand::line(side, side), CadCommand::line(0.0, side),
          CadCommand::line(0.0, 0.0)};
}

/// Axis-aligned cube [0,side]^3 shifted by the plane origin.
inline CadSequence cube(double side = 1.0, double px = 0.0, double py = 0.0, double pz = 0.0) {
  CadSequence seq;
  seq.commands = square_loop(side);
  seq.commands.push_back(plain_extrude(side, BooleanOp::New, px, py, pz));
  seq.commands.push_back(CadCommand::eos());
  return seq;
}

/// Cylinder of radius r and height h standing on z = 0, axis through the origin.
inline CadSequence cylinder(double r = 0.5, double h = 1.0) {
  CadSequence seq;
  seq.commands = {CadCommand::sol(), CadCommand::circle(0.0, 0.0, r), plain_extrude(h), CadCommand::eos()};
  return seq;
}

/// Line out, half-circle arc back: a D-shaped profile.
inline std::vector<CadCommand> d_loop(double w = 0.8) {
  return {CadCommand::sol(), CadCommand::line(w, 0.0), CadCommand::arc(0.0, 0.0, std::numbers::pi, true)};
}

}  // namespace gencad::testing
