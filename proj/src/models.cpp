#include "cpsdyn/models.hpp"

#include "cpsdyn/cps.hpp"
#include "cpsdyn/errors.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

namespace cpsdyn {

ModelSpec ModelSpec::two_level(double coupling, double half_gap) {
  ModelSpec s;
  s.kind = Kind::two_level;
  s.coupling = coupling;
  s.half_gap = half_gap;
  return s;
}

ModelSpec ModelSpec::random(int f, std::uint64_t seed, double scale) {
  ModelSpec s;
  s.kind = Kind::random;
  s.F = f;
  s.seed = seed;
  s.scale = scale;
  return s;
}

ModelSpec ModelSpec::ladder(int f, double gap, double coupling) {
  ModelSpec s;
  s.kind = Kind::ladder;
  s.F = f;
  s.gap = gap;
  s.coupling = coupling;
  return s;
}

ModelSpec ModelSpec::file(std::string path) {
  ModelSpec s;
  s.kind = Kind::file;
  s.path = std::move(path);
  return s;
}

HermitianMatrix build(const ModelSpec& spec) {
  switch (spec.kind) {
    case ModelSpec::Kind::two_level: {
      ComplexMatrix h(2, 2);
      h << spec.half_gap, spec.coupling, spec.coupling, -spec.half_gap;
      return HermitianMatrix(h);
    }
    case ModelSpec::Kind::random: {
      if (spec.F < 1) throw DomainError("random model needs F >= 1");
      Rng rng = make_stream(spec.seed, 0);
      std::normal_distribution<double> normal(0.0, 1.0);
      ComplexMatrix h(spec.F, spec.F);
      for (int i = 0; i < spec.F; ++i) {
        h(i, i) = spec.scale * normal(rng);
        for (int j = i + 1; j < spec.F; ++j) {
          const double re = normal(rng);
          const double im = normal(rng);
          h(i, j) = spec.scale * Complex(re, im) / std::numbers::sqrt2;
          h(j, i) = std::conj(h(i, j));
        }
      }
      return HermitianMatrix(h);
    }
    case ModelSpec::Kind::ladder: {
      if (spec.F < 1) throw DomainError("ladder model needs F >= 1");
      ComplexMatrix h = ComplexMatrix::Zero(spec.F, spec.F);
      for (int i = 0; i < spec.F; ++i) {
        h(i, i) = (i + 1) * spec.gap;
        if (i + 1 < spec.F) h(i, i + 1) = h(i + 1, i) = spec.coupling;
      }
      return HermitianMatrix(h);
    }
    case ModelSpec::Kind::file:
      return load_hamiltonian(spec.path);
  }
  throw DomainError("unknown model kind");
}

namespace {

struct Token {
  std::string text;
  int line;
  int column;
};

[[noreturn]] void fail(const std::string& source, const std::string& msg, int line, int col) {
  std::ostringstream os;
  os << source << ":" << line << ":" << col << ": " << msg;
  throw ParseError(os.str(), line, col);
}

double to_double(const Token& t, const std::string& source) {
  double v = 0.0;
  const char* b = t.text.data();
  const char* e = b + t.text.size();
  if (*b == '+') ++b;
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) fail(source, "malformed number '" + t.text + "'", t.line, t.column);
  return v;
}

}  // namespace

HermitianMatrix parse_hamiltonian(std::istream& in, const std::string& source) {
  // rows of tokens, comments and blank lines removed
  std::vector<std::vector<Token>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::vector<Token> toks;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i >= line.size()) break;
      const std::size_t start = i;
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      toks.push_back({line.substr(start, i - start), lineno, static_cast<int>(start) + 1});
    }
    if (!toks.empty()) rows.push_back(std::move(toks));
  }
  if (rows.empty()) fail(source, "empty Hamiltonian file", lineno, 1);
  if (rows[0].size() != 1) fail(source, "first line must hold only F", rows[0][0].line, rows[0][0].column);
  const Token& ft = rows[0][0];
  int f = 0;
  {
    const auto [ptr, ec] = std::from_chars(ft.text.data(), ft.text.data() + ft.text.size(), f);
    if (ec != std::errc() || ptr != ft.text.data() + ft.text.size() || f < 1)
      fail(source, "F must be a positive integer, got '" + ft.text + "'", ft.line, ft.column);
  }
  if (static_cast<int>(rows.size()) - 1 != f) {
    std::ostringstream os;
    os << "expected " << f << " matrix rows, found " << rows.size() - 1;
    fail(source, os.str(), lineno, 1);
  }
  ComplexMatrix m(f, f);
  for (int r = 0; r < f; ++r) {
    const auto& toks = rows[static_cast<std::size_t>(r) + 1];
    if (static_cast<int>(toks.size()) != 2 * f) {
      std::ostringstream os;
      os << "row " << r + 1 << " has " << toks.size() << " numbers, expected " << 2 * f
         << " (re im pairs; matrix must be square)";
      fail(source, os.str(), toks[0].line, toks[0].column);
    }
    for (int c = 0; c < f; ++c)
      m(r, c) = Complex(to_double(toks[2 * c], source), to_double(toks[2 * c + 1], source));
  }
  int row = 0, col = 0;
  const double asym = HermitianMatrix::max_asymmetry(m, &row, &col);
  if (asym > 1e-10) {
    std::ostringstream os;
    os << source << ": matrix is not Hermitian: entries (" << row + 1 << "," << col + 1 << ") and ("
       << col + 1 << "," << row + 1 << ") differ by " << asym;
    throw NonHermitianError(os.str(), asym, row, col);
  }
  return HermitianMatrix(m, 1e-10);
}

HermitianMatrix load_hamiltonian(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open Hamiltonian file " + path);
  return parse_hamiltonian(in, path);
}

void write_hamiltonian(const HermitianMatrix& h, std::ostream& out) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << h.dim() << "\n";
  for (int r = 0; r < h.dim(); ++r) {
    for (int c = 0; c < h.dim(); ++c) {
      if (c) out << "  ";
      out << h(r, c).real() << " " << h(r, c).imag();
    }
    out << "\n";
  }
  out.precision(old);
}

void save_hamiltonian(const HermitianMatrix& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write Hamiltonian file " + path);
  write_hamiltonian(h, out);
}

}  // namespace cpsdyn
