#include "epictrl/grid.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace epictrl {

void validate_grid(const GridSpec& s, const ModelParams& p) {
    auto fail = [](const char* what) { throw std::invalid_argument(what); };
    if (s.nx < 3 || s.ny < 3 || s.nz < 3) fail("grid needs at least 3 nodes per axis");
    if (!(s.x_lo > 0.0 && s.x_lo < s.x_hi && s.x_hi < 1.0)) fail("grid x_range must lie inside (0,1)");
    if (!(s.y_lo > 0.0 && s.y_lo < s.y_hi && s.y_hi < 1.0)) fail("grid y_range must lie inside (0,1)");
    if (!(s.z_lo > 0.0 && s.z_lo < s.z_hi && s.z_hi < p.gamma)) fail("grid z_range must lie inside (0,gamma)");
    if (!(s.simplex_cap < 1.0)) fail("grid simplex_cap must be below 1");
    if (!(s.x_lo + s.y_lo <= s.simplex_cap)) fail("grid has no active node");
}

ValueGrid make_zero_grid(const GridSpec& spec) {
    ValueGrid g;
    g.spec = spec;
    g.v.assign(spec.size(), 0.0);
    g.vz.assign(spec.size(), 0.0);
    g.v_stderr.assign(spec.size(), 0.0);
    return g;
}

void pad_inactive(const GridSpec& s, std::vector<double>& f) {
    for (int ix = 0; ix < s.nx; ++ix) {
        int last_active = -1;
        for (int iy = 0; iy < s.ny; ++iy) {
            if (s.active(ix, iy)) {
                last_active = iy;
                continue;
            }
            for (int iz = 0; iz < s.nz; ++iz) {
                f[s.index(ix, iy, iz)] = last_active >= 0 ? f[s.index(ix, last_active, iz)]
                                         : ix > 0          ? f[s.index(ix - 1, iy, iz)]
                                                           : 0.0;
            }
        }
    }
}

std::vector<double> derive_vz(const GridSpec& s, const std::vector<double>& v) {
    std::vector<double> out(v.size());
    const double h = s.dz();
    for (int ix = 0; ix < s.nx; ++ix)
        for (int iy = 0; iy < s.ny; ++iy) {
            const double* col = v.data() + s.index(ix, iy, 0);
            double* dst = out.data() + s.index(ix, iy, 0);
            dst[0] = (col[1] - col[0]) / h;
            for (int iz = 1; iz + 1 < s.nz; ++iz) dst[iz] = (col[iz + 1] - col[iz - 1]) / (2.0 * h);
            dst[s.nz - 1] = (col[s.nz - 1] - col[s.nz - 2]) / h;
        }
    return out;
}

namespace {

const std::vector<double>& field_of(const ValueGrid& g, GridField field) {
    return field == GridField::v ? g.v : g.vz;
}

bool inside(double v, double lo, double hi) {
    const double slack = 1e-12 * (hi - lo);
    return v >= lo - slack && v <= hi + slack;
}

} // namespace

double interpolate(const ValueGrid& g, const EpidemicState& q, GridField field) {
    const GridSpec& s = g.spec;
    if (!inside(q.s, s.x_lo, s.x_hi) || !inside(q.i, s.y_lo, s.y_hi) || !inside(q.beta, s.z_lo, s.z_hi) ||
        q.s + q.i > s.simplex_cap + 1e-12)
        throw GridError("state outside value grid");
    bool clamped = false;
    return GridSampler(s, field_of(g, field))(q.s, q.i, q.beta, clamped);
}

double interpolate_clamped(const ValueGrid& g, const EpidemicState& q, GridField field, bool* clamped) {
    bool c = false;
    const double out = GridSampler(g.spec, field_of(g, field))(q.s, q.i, q.beta, c);
    if (clamped) *clamped = c;
    return out;
}

// ---------------------------------------------------------------------------
// Binary container

namespace {

constexpr std::array<char, 8> kMagic = {'E', 'P', 'I', 'V', 'G', 'R', 'I', 'D'};

class Writer {
public:
    explicit Writer(std::ofstream& os) : os_(os) {}
    template <typename T>
    void put(T value) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                        std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
        const U bits = std::bit_cast<U>(value);
        char bytes[sizeof(U)];
        for (std::size_t b = 0; b < sizeof(U); ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
        os_.write(bytes, sizeof(U));
    }
    void put_array(const std::vector<double>& a) {
        for (double d : a) put(d);
    }

private:
    std::ofstream& os_;
};

class Reader {
public:
    explicit Reader(std::vector<char> data) : data_(std::move(data)) {}
    template <typename T>
    T get() {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                        std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
        if (pos_ + sizeof(U) > data_.size()) throw GridError("grid file truncated");
        U bits = 0;
        for (std::size_t b = 0; b < sizeof(U); ++b)
            bits |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
        pos_ += sizeof(U);
        return std::bit_cast<T>(bits);
    }
    std::vector<double> get_array(std::size_t n) {
        if (pos_ + 8 * n > data_.size()) throw GridError("grid file truncated");
        std::vector<double> out(n);
        for (auto& d : out) d = get<double>();
        return out;
    }
    std::span<const char> take(std::size_t n) {
        if (pos_ + n > data_.size()) throw GridError("grid file truncated");
        std::span<const char> out(data_.data() + pos_, n);
        pos_ += n;
        return out;
    }
    bool at_end() const { return pos_ == data_.size(); }

private:
    std::vector<char> data_;
    std::size_t pos_ = 0;
};

} // namespace

void save_grid(const ValueGrid& g, const std::filesystem::path& path, const std::string& sidecar_json) {
    const GridSpec& s = g.spec;
    if (g.v.size() != s.size() || g.vz.size() != s.size() || g.v_stderr.size() != s.size())
        throw GridError("grid arrays do not match spec");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os.write(kMagic.data(), kMagic.size());
    Writer w(os);
    w.put(kGridFormatVersion);
    w.put(g.fingerprint);
    w.put(static_cast<std::uint32_t>(s.nx));
    w.put(static_cast<std::uint32_t>(s.ny));
    w.put(static_cast<std::uint32_t>(s.nz));
    for (double d : {s.x_lo, s.x_hi, s.y_lo, s.y_hi, s.z_lo, s.z_hi, s.simplex_cap}) w.put(d);
    w.put(static_cast<std::uint32_t>(g.iteration));
    w.put(g.residual);
    w.put(static_cast<std::uint8_t>(g.converged ? 1 : 0));
    w.put(static_cast<std::uint32_t>(g.residual_history.size()));
    w.put_array(g.residual_history);
    w.put_array(g.v);
    w.put_array(g.vz);
    w.put_array(g.v_stderr);
    if (!os) throw std::runtime_error("write failed for " + path.string());

    if (!sidecar_json.empty()) {
        std::ofstream js(path.string() + ".json", std::ios::trunc);
        if (!js) throw std::runtime_error("cannot open sidecar for " + path.string());
        js << sidecar_json << '\n';
    }
}

ValueGrid load_grid(const std::filesystem::path& path, std::optional<std::uint64_t> expected_fingerprint) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw GridError("cannot open grid file " + path.string());
    Reader r(std::vector<char>(std::istreambuf_iterator<char>(is), {}));

    const auto magic = r.take(kMagic.size());
    if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) throw GridError("not a value grid file (bad magic)");
    const auto version = r.get<std::uint16_t>();
    if (version != kGridFormatVersion)
        throw GridError("unsupported grid format version " + std::to_string(version));

    ValueGrid g;
    g.fingerprint = r.get<std::uint64_t>();
    if (expected_fingerprint && *expected_fingerprint != g.fingerprint)
        throw GridError("grid fingerprint mismatch");
    GridSpec& s = g.spec;
    s.nx = static_cast<int>(r.get<std::uint32_t>());
    s.ny = static_cast<int>(r.get<std::uint32_t>());
    s.nz = static_cast<int>(r.get<std::uint32_t>());
    if (s.nx < 2 || s.ny < 2 || s.nz < 2 || s.size() > (std::size_t{1} << 28)) throw GridError("corrupt grid dimensions");
    for (double* d : {&s.x_lo, &s.x_hi, &s.y_lo, &s.y_hi, &s.z_lo, &s.z_hi, &s.simplex_cap}) *d = r.get<double>();
    g.iteration = static_cast<int>(r.get<std::uint32_t>());
    g.residual = r.get<double>();
    g.converged = r.get<std::uint8_t>() != 0;
    const auto history = r.get<std::uint32_t>();
    g.residual_history = r.get_array(history);
    g.v = r.get_array(s.size());
    g.vz = r.get_array(s.size());
    g.v_stderr = r.get_array(s.size());
    if (!r.at_end()) throw GridError("trailing bytes in grid file");
    return g;
}

} // namespace epictrl
