// CSV, PGM and plain-text artifacts. Every CSV has a header row and ends with
// a `# config_hash=` comment line.
#pragma once

#include "xrt/common.hpp"
#include "xrt/grid.hpp"
#include "xrt/parametrix.hpp"
#include "xrt/reconstruct.hpp"
#include "xrt/symbol.hpp"
#include "xrt/transform.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace xrt {

namespace fs = std::filesystem;

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t v = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    v ^= ch;
    v *= 0x100000001b3ull;
  }
  return v;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write " + p.string());
  out << text;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string file_hash(const fs::path& p) { return hex64(fnv1a(read_text(p))); }

inline std::string csv_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12e", x);
  return buf;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void row(const std::vector<double>& v) {
    if (v.size() != header_.size()) throw InputError("csv row width does not match header");
    std::string line;
    for (std::size_t k = 0; k < v.size(); ++k) line += (k ? "," : "") + csv_number(v[k]);
    rows_.push_back(line);
  }
  void row_text(const std::vector<std::string>& v) {
    if (v.size() != header_.size()) throw InputError("csv row width does not match header");
    std::string line;
    for (std::size_t k = 0; k < v.size(); ++k) line += (k ? "," : "") + v[k];
    rows_.push_back(line);
  }
  std::size_t rows() const { return rows_.size(); }

  std::string str(const std::string& config_hash) const {
    std::string s;
    for (std::size_t k = 0; k < header_.size(); ++k) s += (k ? "," : "") + header_[k];
    s += "\n";
    for (const auto& r : rows_) s += r + "\n";
    s += "# config_hash=" + config_hash + "\n";
    return s;
  }
  void write(const fs::path& p, const std::string& config_hash) const { write_text(p, str(config_hash)); }

 private:
  std::vector<std::string> header_;
  std::vector<std::string> rows_;
};

inline CsvTable grid_csv(const ScalarGrid& f) {
  CsvTable t({"x1", "x2", "value"});
  for (std::size_t k = 0; k < f.size(); ++k) {
    Vec2 x = f.node(k);
    t.row({x.x(), x.y(), f[k]});
  }
  return t;
}

inline CsvTable sinogram_csv(const SinogramGrid& s) {
  CsvTable t({"theta", "alpha", "value"});
  const FanBeam& fan = s.fan();
  for (int i = 0; i < fan.n_theta; ++i)
    for (int j = 0; j < fan.n_alpha; ++j) t.row({fan.theta(i), fan.alpha(j), s(i, j)});
  return t;
}

/// Channel 0 of a symbol grid: (x, xi, Re p, Im p).
inline CsvTable symbol_csv(const SymbolGrid& g) {
  CsvTable t({"x1", "x2", "xi1", "xi2", "re", "im"});
  for (std::size_t ix = 0; ix < g.x.size(); ++ix)
    for (std::size_t ir = 0; ir < g.freq.radii.size(); ++ir)
      for (int d = 0; d < g.freq.n_dirs; ++d) {
        Vec2 xi = g.freq.xi(static_cast<int>(ir), d);
        cplx v = g.at(ix, static_cast<int>(ir), d)[0];
        t.row({g.x[ix].x(), g.x[ix].y(), xi.x(), xi.y(), v.real(), v.imag()});
      }
  return t;
}

inline CsvTable seminorm_csv(const SeminormReport& r) {
  CsvTable t({"kind", "alpha", "exponent", "constant", "bound", "pass"});
  for (const auto& row : r.rows)
    t.row_text({row.kind, std::to_string(row.order), csv_number(row.exponent), csv_number(row.constant),
                csv_number(row.bound), row.pass ? "1" : "0"});
  return t;
}

inline CsvTable smoothing_csv(const SmoothingReport& r) {
  CsvTable t({"band", "frequency", "in_energy", "residual_energy", "ratio"});
  for (const auto& b : r.bands) t.row({double(b.j), b.frequency, b.in_energy, b.residual_energy, b.ratio});
  return t;
}

inline std::string smoothing_summary(const SmoothingReport& r) {
  std::ostringstream s;
  s << "tau=" << csv_number(r.tau) << " r2=" << csv_number(r.r2) << " " << (r.pass() ? "PASS" : "FAIL") << "\n";
  return s.str();
}

inline CsvTable trace_csv(const IterationTrace& tr) {
  std::vector<std::string> h{"iteration", "residual"};
  bool err = tr.error.size() == tr.size();
  if (err) h.push_back("error");
  for (double t : tr.t_probe) h.push_back("sobolev_" + csv_number(t));
  CsvTable c(h);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    std::vector<double> row{double(k), tr.residual[k]};
    if (err) row.push_back(tr.error[k]);
    row.insert(row.end(), tr.sobolev[k].begin(), tr.sobolev[k].end());
    c.row(row);
  }
  return c;
}

inline CsvTable injectivity_csv(const InjectivityReport& r) {
  CsvTable t({"dims", "unknowns", "sigma_min", "sigma_max", "condition", "symmetry_defect", "pass"});
  t.row({double(r.dims), double(r.unknowns), r.sigma_min, r.sigma_max, r.condition, r.symmetry_defect,
         r.pass ? 1.0 : 0.0});
  return t;
}

/// Plain PGM (P2) with maxval 65535, min-max scaled; the scale goes to
/// `<path>.scale.txt` as `min max`. Row 0 of the image is the top (largest x2).
inline void write_pgm(const fs::path& p, const ScalarGrid& f) {
  auto [lo_it, hi_it] = std::minmax_element(f.values().begin(), f.values().end());
  double lo = f.size() ? *lo_it : 0.0, hi = f.size() ? *hi_it : 0.0;
  double span = hi > lo ? hi - lo : 1.0;
  std::string s = "P2\n" + std::to_string(f.nx()) + " " + std::to_string(f.ny()) + "\n65535\n";
  for (int j = f.ny() - 1; j >= 0; --j) {
    for (int i = 0; i < f.nx(); ++i) {
      long v = std::lround(65535.0 * (f(i, j) - lo) / span);
      s += (i ? " " : "") + std::to_string(std::clamp(v, 0L, 65535L));
    }
    s += "\n";
  }
  write_text(p, s);
  write_text(p.string() + ".scale.txt", "min " + csv_number(lo) + "\nmax " + csv_number(hi) + "\n");
}

// ---------------------------------------------------------------------------
// Calibration artifact

inline const char* kCalibrationFile = "calibration.txt";

inline void write_calibration(const fs::path& dir, const Calibration& c) {
  std::string s = "C " + csv_number(c.C) + "\nspread " + csv_number(c.spread) + "\n";
  for (std::size_t k = 0; k < c.probes.size(); ++k)
    s += "probe " + csv_number(c.probes[k]) + " " + csv_number(c.values[k]) + "\n";
  write_text(dir / kCalibrationFile, s);
}

inline double read_calibration(const fs::path& dir) {
  fs::path p = dir / kCalibrationFile;
  if (!fs::exists(p))
    throw InputError("no calibration found at " + p.string() + "; run the `calibrate` subcommand first");
  std::istringstream in(read_text(p));
  std::string key;
  double C = 0.0;
  if (!(in >> key >> C) || key != "C" || !(C > 0.0)) throw InputError("malformed calibration file " + p.string());
  return C;
}

}  // namespace xrt
