#include "nonlocal/grid.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <tuple>

namespace nonlocal {

std::array<int, 3> GridSpec::multi(long flat) const {
  std::array<int, 3> idx{0, 0, 0};
  idx[2] = int(flat % n[2]);
  flat /= n[2];
  idx[1] = int(flat % n[1]);
  idx[0] = int(flat / n[1]);
  return idx;
}

long GridSpec::flat(const std::array<int, 3>& idx) const {
  return (long(idx[0]) * n[1] + idx[1]) * n[2] + idx[2];
}

int GridSpec::signed_m(int axis, int j) const {
  return j <= n[axis] / 2 ? j : j - n[axis];
}

VecR GridSpec::frequency(long f) const {
  if (f < 0 || f >= total()) throw config_error("lattice index out of range");
  const std::array<int, 3> idx = multi(f);
  VecR xi(d);
  for (int a = 0; a < d; ++a) xi[a] = real(signed_m(a, idx[a])) / box[a];
  return xi;
}

GridSpec make_grid(int d, const std::vector<int>& n,
                   const std::vector<real>& box) {
  if (d < 1 || d > 3) throw config_error("grid dimension must be 1, 2, or 3");
  if (int(n.size()) != d || int(box.size()) != d)
    throw config_error("grid needs one sample count and box length per axis");
  GridSpec g;
  g.d = d;
  long tot = 1;
  for (int a = 0; a < d; ++a) {
    if (n[a] < 4 || n[a] % 2 != 0)
      throw config_error("samples per axis must be even and at least 4");
    if (!(box[a] > 0.0) || !std::isfinite(box[a]))
      throw config_error("box lengths must be positive finite");
    g.n[a] = n[a];
    g.box[a] = box[a];
    tot *= n[a];
    if (tot > (1L << 28))
      throw config_error("grid too large for addressable memory budget");
  }
  return g;
}

VectorField make_field(const GridSpec& grid, int components) {
  if (components < 1) throw config_error("field needs at least one component");
  VectorField f;
  f.grid = grid;
  f.components = components;
  f.data.assign(std::size_t(components) * grid.total(), 0.0);
  return f;
}

SpectralField make_spectral(const GridSpec& grid, int components) {
  if (components < 1) throw config_error("field needs at least one component");
  SpectralField f;
  f.grid = grid;
  f.components = components;
  f.coeffs.assign(std::size_t(components) * grid.total(), cplx(0.0, 0.0));
  return f;
}

namespace {

// Plans are cached per shape and reused via the new-array interface.
// FFTW_ESTIMATE keeps planning deterministic; transforms stay single
// threaded so results are bit-identical for any NONLOCAL_THREADS.
fftw_plan plan_for(const GridSpec& g, int sign) {
  static std::map<std::tuple<int, int, int, int, int>, fftw_plan> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  const auto key = std::make_tuple(g.d, g.n[0], g.n[1], g.n[2], sign);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  std::vector<cplx> a(g.total()), b(g.total());
  int dims[3] = {g.n[0], g.n[1], g.n[2]};
  fftw_plan p = fftw_plan_dft(g.d, dims,
                              reinterpret_cast<fftw_complex*>(a.data()),
                              reinterpret_cast<fftw_complex*>(b.data()), sign,
                              FFTW_ESTIMATE | FFTW_UNALIGNED);
  cache.emplace(key, p);
  return p;
}

void execute(fftw_plan p, cplx* in, cplx* out) {
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(in),
                   reinterpret_cast<fftw_complex*>(out));
}

}  // namespace

SpectralField forward_transform(const VectorField& field) {
  const long tot = field.grid.total();
  for (std::size_t i = 0; i < field.data.size(); ++i)
    if (!std::isfinite(field.data[i]))
      throw config_error("non-finite field entry at flat index " +
                         std::to_string(i));
  SpectralField out = make_spectral(field.grid, field.components);
  fftw_plan p = plan_for(field.grid, FFTW_FORWARD);
  std::vector<cplx> in(tot);
  for (int c = 0; c < field.components; ++c) {
    for (long i = 0; i < tot; ++i) in[i] = cplx(field.at(c, i), 0.0);
    execute(p, in.data(), &out.coeffs[std::size_t(c) * tot]);
  }
  return out;
}

VectorField inverse_transform(const SpectralField& spec) {
  const long tot = spec.grid.total();
  VectorField out = make_field(spec.grid, spec.components);
  fftw_plan p = plan_for(spec.grid, FFTW_BACKWARD);
  std::vector<cplx> in(tot), work(tot);
  const real scale = 1.0 / real(tot);
  real max_re = 0.0, max_im = 0.0;
  for (int c = 0; c < spec.components; ++c) {
    std::memcpy(in.data(), &spec.coeffs[std::size_t(c) * tot],
                sizeof(cplx) * tot);
    execute(p, in.data(), work.data());
    for (long i = 0; i < tot; ++i) {
      const real re = work[i].real() * scale;
      max_re = std::max(max_re, std::abs(re));
      max_im = std::max(max_im, std::abs(work[i].imag()) * scale);
      out.at(c, i) = re;
    }
  }
  if (max_im > 1e-8 * std::max(max_re, 1e-300))
    throw config_error("inverse transform is not real: imaginary residual " +
                       fmt17(max_im) + " against amplitude " + fmt17(max_re));
  return out;
}

long conjugate_flat(const GridSpec& grid, long flat) {
  std::array<int, 3> idx = grid.multi(flat);
  for (int a = 0; a < grid.d; ++a)
    idx[a] = idx[a] == 0 ? 0 : grid.n[a] - idx[a];
  return grid.flat(idx);
}

VectorField random_band_limited(const GridSpec& grid, int components, int kmax,
                                std::uint64_t seed) {
  if (kmax < 1) throw config_error("band limit must be at least 1");
  for (int a = 0; a < grid.d; ++a)
    if (kmax >= grid.n[a] / 2)
      throw config_error("band limit must stay below the Nyquist row");
  SpectralField sf = make_spectral(grid, components);
  const long tot = grid.total();
  long filled = 0;
  for (long f = 0; f < tot; ++f) {
    const std::array<int, 3> idx = grid.multi(f);
    bool in_band = false;
    for (int a = 0; a < grid.d; ++a) {
      const int m = grid.signed_m(a, idx[a]);
      if (std::abs(m) > kmax) {
        in_band = false;
        break;
      }
      if (m != 0) in_band = true;
    }
    if (!in_band) continue;
    ++filled;
    const long cf = conjugate_flat(grid, f);
    if (f > cf) continue;  // written together with the canonical partner
    for (int c = 0; c < components; ++c) {
      Rng rng = sub_rng(seed, std::uint64_t(c) * tot + f);
      const auto z = rng.normal_pair();
      if (cf == f) {
        sf.at(c, f) = cplx(z[0], 0.0);
      } else {
        const cplx v(z[0] / std::sqrt(2.0), z[1] / std::sqrt(2.0));
        sf.at(c, f) = v;
        sf.at(c, cf) = std::conj(v);
      }
    }
  }
  if (filled == 0) throw config_error("band contains no modes");
  const real amp = real(tot) / std::sqrt(real(filled));
  for (cplx& z : sf.coeffs) z *= amp;
  return inverse_transform(sf);
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, real x) {
  std::uint64_t v;
  std::memcpy(&v, &x, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw truncated_error("field file header truncated");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

real get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw truncated_error("field file header truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  real x;
  std::memcpy(&x, &v, 8);
  return x;
}

}  // namespace

void write_field(const VectorField& field, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  const unsigned char magic[4] = {0x4E, 0x4C, 0x53, 0x46};
  os.write(reinterpret_cast<const char*>(magic), 4);
  put_u32(os, 1);
  put_u32(os, std::uint32_t(field.grid.d));
  put_u32(os, std::uint32_t(field.components));
  for (int a = 0; a < field.grid.d; ++a) put_u32(os, std::uint32_t(field.grid.n[a]));
  for (int a = 0; a < field.grid.d; ++a) put_f64(os, field.grid.box[a]);
  for (real x : field.data) put_f64(os, x);
  if (!os) throw io_error("write failed: " + path);
}

VectorField read_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open for reading: " + path);
  unsigned char magic[4];
  if (!is.read(reinterpret_cast<char*>(magic), 4))
    throw truncated_error("field file header truncated");
  if (magic[0] != 0x4E || magic[1] != 0x4C || magic[2] != 0x53 ||
      magic[3] != 0x46)
    throw bad_magic_error("not a field file (bad magic)");
  const std::uint32_t version = get_u32(is);
  if (version != 1)
    throw bad_version_error("unsupported field file version " +
                            std::to_string(version));
  const std::uint32_t d = get_u32(is);
  if (d < 1 || d > 3)
    throw bad_dimension_error("field file dimension " + std::to_string(d) +
                              " outside 1..3");
  const std::uint32_t components = get_u32(is);
  if (components < 1 || components > 16)
    throw bad_dimension_error("field file component count " +
                              std::to_string(components) + " outside 1..16");
  std::vector<int> n(d);
  std::vector<real> box(d);
  for (std::uint32_t a = 0; a < d; ++a) n[a] = int(get_u32(is));
  for (std::uint32_t a = 0; a < d; ++a) box[a] = get_f64(is);
  const GridSpec grid = make_grid(int(d), n, box);
  VectorField f = make_field(grid, int(components));
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
      throw truncated_error("field payload shorter than header promises");
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= std::uint64_t(b[k]) << (8 * k);
    std::memcpy(&f.data[i], &v, 8);
    if (!std::isfinite(f.data[i]))
      throw io_error("non-finite payload entry at index " + std::to_string(i));
  }
  return f;
}

}  // namespace nonlocal
