#pragma once

#include "epictrl/model.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace epictrl {

/// Uniform tensor grid over a box inside the state domain. A node is active when
/// x + y <= simplex_cap; inactive nodes carry padded copies of active values so that
/// trilinear cells straddling the mask boundary remain well defined.
struct GridSpec {
    int nx = 21;
    int ny = 21;
    int nz = 11;
    double x_lo = 0.005, x_hi = 0.995;
    double y_lo = 0.005, y_hi = 0.995;
    double z_lo = 0.004, z_hi = 0.156;
    double simplex_cap = 0.995;

    bool operator==(const GridSpec&) const = default;

    std::size_t size() const { return static_cast<std::size_t>(nx) * ny * nz; }
    std::size_t index(int ix, int iy, int iz) const {
        return (static_cast<std::size_t>(ix) * ny + iy) * nz + iz;
    }
    double dx() const { return (x_hi - x_lo) / (nx - 1); }
    double dy() const { return (y_hi - y_lo) / (ny - 1); }
    double dz() const { return (z_hi - z_lo) / (nz - 1); }
    double x(int ix) const { return ix == nx - 1 ? x_hi : x_lo + ix * dx(); }
    double y(int iy) const { return iy == ny - 1 ? y_hi : y_lo + iy * dy(); }
    double z(int iz) const { return iz == nz - 1 ? z_hi : z_lo + iz * dz(); }
    bool active(int ix, int iy) const { return x(ix) + y(iy) <= simplex_cap + 1e-12; }
};

/// Throws std::invalid_argument unless the spec is a proper grid inside the domain for `p`.
void validate_grid(const GridSpec& spec, const ModelParams& p);

/// Thrown for queries outside the tabulated region and for malformed grid files.
class GridError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class GridField { v, vz };

/// Tabulated value function and its z-derivative on a GridSpec, x-major storage.
struct ValueGrid {
    GridSpec spec;
    std::vector<double> v;
    std::vector<double> vz;
    std::vector<double> v_stderr;  ///< Monte Carlo standard error of v from the last sweep
    int iteration = 0;
    double residual = 0.0;
    bool converged = false;
    std::vector<double> residual_history;
    std::uint64_t fingerprint = 0;

    bool operator==(const ValueGrid&) const = default;
};

ValueGrid make_zero_grid(const GridSpec& spec);

/// Overwrites inactive nodes: each copies the nearest active node below it in y, or, for
/// columns with no active node, the already-padded neighbour at x index ix - 1.
void pad_inactive(const GridSpec& spec, std::vector<double>& field);

/// Central differences in z, one-sided first-order differences at the two z boundaries.
std::vector<double> derive_vz(const GridSpec& spec, const std::vector<double>& v);

/// Trilinear interpolation. Throws GridError("state outside value grid") when the state is
/// outside the box or above the simplex cap.
double interpolate(const ValueGrid& g, const EpidemicState& q, GridField field);

/// Same as interpolate but first projects the query onto the box; the mask is ignored
/// because inactive nodes are padded. `clamped` reports whether the projection moved the query.
double interpolate_clamped(const ValueGrid& g, const EpidemicState& q, GridField field,
                           bool* clamped = nullptr);

/// Non-owning fast evaluator for hot loops; does no bounds checks beyond box clamping.
class GridSampler {
public:
    GridSampler(const GridSpec& spec, const std::vector<double>& field)
        : spec_(spec), data_(field.data()), inv_dx_(1.0 / spec.dx()), inv_dy_(1.0 / spec.dy()),
          inv_dz_(1.0 / spec.dz()) {}

    /// Returns true in `clamped` when the query had to be projected onto the box.
    double operator()(double x, double y, double z, bool& clamped) const {
        double fx = (x - spec_.x_lo) * inv_dx_;
        double fy = (y - spec_.y_lo) * inv_dy_;
        double fz = (z - spec_.z_lo) * inv_dz_;
        clamped = false;
        int ix = cell(fx, spec_.nx, clamped);
        int iy = cell(fy, spec_.ny, clamped);
        int iz = cell(fz, spec_.nz, clamped);
        const double tx = fx - ix, ty = fy - iy, tz = fz - iz;
        const std::size_t sx = static_cast<std::size_t>(spec_.ny) * spec_.nz;
        const std::size_t sy = static_cast<std::size_t>(spec_.nz);
        const double* c = data_ + spec_.index(ix, iy, iz);
        const double c00 = lerp(c[0], c[1], tz);
        const double c01 = lerp(c[sy], c[sy + 1], tz);
        const double c10 = lerp(c[sx], c[sx + 1], tz);
        const double c11 = lerp(c[sx + sy], c[sx + sy + 1], tz);
        return lerp(lerp(c00, c01, ty), lerp(c10, c11, ty), tx);
    }

private:
    // Exact at t = 0 and t = 1.
    static double lerp(double a, double b, double t) { return (1.0 - t) * a + t * b; }

    // Lower cell index for fractional coordinate f; f is clamped into [0, n-1].
    static int cell(double& f, int n, bool& clamped) {
        const double top = static_cast<double>(n - 1);
        if (!(f >= 0.0)) {
            clamped = true;
            f = 0.0;
        } else if (f > top) {
            clamped = true;
            f = top;
        }
        // snap coordinates that are within round-off of a node
        const double nearest = std::round(f);
        if (std::abs(f - nearest) < 1e-12) f = nearest;
        int i = static_cast<int>(f);
        return i > n - 2 ? n - 2 : i;
    }

    const GridSpec& spec_;
    const double* data_;
    double inv_dx_, inv_dy_, inv_dz_;
};

/// Binary grid container: magic "EPIVGRID", u16 version, u64 fingerprint, GridSpec,
/// iteration metadata, then little-endian f64 arrays v, vz, v_stderr in x-major order.
/// `sidecar_json`, when non-empty, is written next to the grid as `<path>.json`.
void save_grid(const ValueGrid& g, const std::filesystem::path& path, const std::string& sidecar_json = {});

/// Loads a grid; throws GridError on bad magic, unsupported version, truncation, or when
/// `expected_fingerprint` is given and differs from the stored one.
ValueGrid load_grid(const std::filesystem::path& path, std::optional<std::uint64_t> expected_fingerprint = {});

inline constexpr std::uint16_t kGridFormatVersion = 1;

} // namespace epictrl
