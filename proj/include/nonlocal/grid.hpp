#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nonlocal/common.hpp"

namespace nonlocal {

// Periodic box sampled on a uniform lattice, row-major over axes.
// Frequencies are xi_k = m_k / box_k with the signed integer m_k in
// (-n_k/2, n_k/2]; the Nyquist row takes the positive sign.
struct GridSpec {
  int d = 0;
  std::array<int, 3> n{1, 1, 1};
  std::array<real, 3> box{1.0, 1.0, 1.0};

  long total() const { return long(n[0]) * n[1] * n[2]; }
  real cell_volume() const {
    real v = 1.0;
    for (int a = 0; a < d; ++a) v *= box[a] / n[a];
    return v;
  }
  real volume() const {
    real v = 1.0;
    for (int a = 0; a < d; ++a) v *= box[a];
    return v;
  }

  std::array<int, 3> multi(long flat) const;
  long flat(const std::array<int, 3>& idx) const;
  int signed_m(int axis, int j) const;  // j in [0, n) -> m in (-n/2, n/2]
  VecR frequency(long flat) const;      // rejects out-of-range flat index
};

GridSpec make_grid(int d, const std::vector<int>& n,
                   const std::vector<real>& box);

struct VectorField {
  GridSpec grid;
  int components = 0;
  std::vector<real> data;  // component-major, row-major axes

  real& at(int c, long flat) { return data[std::size_t(c) * grid.total() + flat]; }
  real at(int c, long flat) const {
    return data[std::size_t(c) * grid.total() + flat];
  }
};

VectorField make_field(const GridSpec& grid, int components);

struct SpectralField {
  GridSpec grid;
  int components = 0;
  std::vector<cplx> coeffs;  // same layout over the frequency lattice

  cplx& at(int c, long flat) {
    return coeffs[std::size_t(c) * grid.total() + flat];
  }
  cplx at(int c, long flat) const {
    return coeffs[std::size_t(c) * grid.total() + flat];
  }
};

SpectralField make_spectral(const GridSpec& grid, int components);

// Forward is unnormalized (zero mode = sum of samples); inverse carries the
// 1/(prod n) factor, so inverse(forward(u)) == u. Sign convention of the
// forward transform is e^{-2 pi i x.xi}.
SpectralField forward_transform(const VectorField& field);
VectorField inverse_transform(const SpectralField& spec);

// flat index of the frequency -m (mod n) paired with flat's +m
long conjugate_flat(const GridSpec& grid, long flat);

// Mean-free real Gaussian field with modes confined to max_k |m_k| <= kmax,
// scaled to unit pointwise variance. Deterministic in (seed, grid shape),
// independent of threading.
VectorField random_band_limited(const GridSpec& grid, int components, int kmax,
                                std::uint64_t seed);

struct bad_magic_error : io_error {
  using io_error::io_error;
};
struct bad_version_error : io_error {
  using io_error::io_error;
};
struct truncated_error : io_error {
  using io_error::io_error;
};
struct bad_dimension_error : io_error {
  using io_error::io_error;
};

// NLSF version 1, little-endian: magic 4E 4C 53 46, u32 version, u32 d,
// u32 components, d x u32 n, d x f64 box, then f64 payload in field order.
void write_field(const VectorField& field, const std::string& path);
VectorField read_field(const std::string& path);

}  // namespace nonlocal
