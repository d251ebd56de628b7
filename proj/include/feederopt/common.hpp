#pragma once

// Shared scalar types, unit conventions and small helpers used across the
// toolkit. All electrical quantities are carried in per-unit on a common
// three-phase base (base_kva, base_v line-to-line); energies are pu*h.

#include <complex>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

namespace feederopt {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

// Phase labels. Single-phase laterals are represented by absent (bus,phase)
// pairs, never by dummy zero-impedance conductors.
enum class Phase : int { A = 0, B = 1, C = 2 };

inline char phase_letter(int z) { return static_cast<char>('a' + z); }

inline int phase_from_letter(char c) {
  if (c >= 'a' && c <= 'c') return c - 'a';
  if (c >= 'A' && c <= 'C') return c - 'A';
  throw std::invalid_argument(std::string("unknown phase letter '") + c + "'");
}

// Rotation set applied to the three phase voltages so each lands near the
// 0-degree axis; also the slack reference phasors at 1 pu.
inline cplx phase_unit(int z) {
  switch (z) {
    case 0: return {1.0, 0.0};
    case 1: return std::polar(1.0, -2.0 * kPi / 3.0);
    default: return std::polar(1.0, 2.0 * kPi / 3.0);
  }
}

// Rotation factor R_z with R_z * phase_unit(z) = 1.
inline cplx phase_rotation(int z) { return std::conj(phase_unit(z)); }

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shortest round-trip-exact decimal rendering of a double. Used everywhere a
// number is written to an artifact file so reruns are byte-identical.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // prefer the shortest representation that parses back exactly
  for (int prec = 1; prec < 17; ++prec) {
    char probe[40];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    if (std::strtod(probe, nullptr) == v) return probe;
  }
  return buf;
}

inline std::string fmt_complex(cplx z) {
  std::string s = fmt_double(z.real());
  s += (z.imag() < 0 || std::signbit(z.imag())) ? "" : "+";
  s += fmt_double(z.imag());
  s += "j";
  return s;
}

// Parses "re+imj" / "re-imj" / plain real.
cplx parse_complex(const std::string& text);

inline bool nearly_equal(double a, double b, double tol) {
  return std::abs(a - b) <= tol;
}

}  // namespace feederopt
