#pragma once

// Hamiltonians for experiments: built-in model families and a small text
// file format (line 1: F; then F rows of F "re im" pairs; '#' comments).

#include "cpsdyn/qcore.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace cpsdyn {

struct ModelSpec {
  enum class Kind { two_level, random, ladder, file };

  Kind kind = Kind::two_level;
  double coupling = 1.0;  // two_level Delta, ladder nearest-neighbour coupling
  double half_gap = 0.0;  // two_level epsilon
  int F = 2;
  std::uint64_t seed = 0;
  double scale = 1.0;
  double gap = 1.0;
  std::string path;

  static ModelSpec two_level(double coupling, double half_gap);
  static ModelSpec random(int f, std::uint64_t seed, double scale);
  static ModelSpec ladder(int f, double gap, double coupling);
  static ModelSpec file(std::string path);
};

/// two_level: [[eps, Delta], [Delta, -eps]]; random: GUE-style draw times
/// scale; ladder: diagonal (n+1) gap, first off-diagonals coupling.
HermitianMatrix build(const ModelSpec& spec);

HermitianMatrix load_hamiltonian(const std::string& path);
/// `source` names the input in error messages.
HermitianMatrix parse_hamiltonian(std::istream& in, const std::string& source = "<input>");

void save_hamiltonian(const HermitianMatrix& h, const std::string& path);
void write_hamiltonian(const HermitianMatrix& h, std::ostream& out);

}  // namespace cpsdyn
