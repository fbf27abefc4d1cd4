#include <array>
#include <cstring>
#include <fstream>

#include "jcel/waveform.hpp"

namespace jcel {

namespace {

constexpr std::array<char, 8> kMagic = {'J', 'C', 'E', 'L', 'O', 'B', 'S', '1'};

template <typename T>
void put(std::ostream& os, T value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
    T value{};
    if (!is.read(reinterpret_cast<char*>(&value), sizeof(T)))
        throw IoError("read_observation: truncated file " + path.string());
    return value;
}

void put_matrix(std::ostream& os, const MatrixXcd& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            put(os, m(r, c).real());
            put(os, m(r, c).imag());
        }
}

MatrixXcd get_matrix(std::istream& is, int rows, int cols, const std::filesystem::path& path) {
    MatrixXcd m(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) {
            const double re = get<double>(is, path);
            const double im = get<double>(is, path);
            m(r, c) = {re, im};
        }
    return m;
}

}  // namespace

void write_observation(const std::filesystem::path& path, const FreqObservation& obs) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_observation: cannot open " + path.string());
    const auto d = obs.dims();
    os.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(os, static_cast<std::uint32_t>(d.waveguides));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(d.users));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(d.frames));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(d.subcarriers));
    put<std::uint64_t>(os, obs.seed);
    put<double>(os, obs.noise_var);
    put<double>(os, obs.pilots.power);
    put_matrix(os, obs.pilots.entries);
    for (const auto& yl : obs.y) put_matrix(os, yl);
    if (!os) throw IoError("write_observation: write failed for " + path.string());
}

FreqObservation read_observation(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_observation: cannot open " + path.string());
    std::array<char, 8> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic)
        throw IoError("read_observation: bad magic in " + path.string());
    const auto M = get<std::uint32_t>(is, path);
    const auto K = get<std::uint32_t>(is, path);
    const auto P = get<std::uint32_t>(is, path);
    const auto L = get<std::uint32_t>(is, path);
    FreqObservation obs;
    obs.seed = get<std::uint64_t>(is, path);
    obs.noise_var = get<double>(is, path);
    obs.pilots.power = get<double>(is, path);
    obs.pilots.entries = get_matrix(is, K, P, path);
    obs.y.reserve(L);
    for (std::uint32_t l = 0; l < L; ++l) obs.y.push_back(get_matrix(is, M, P, path));
    return obs;
}

void dump_observation_csv(const std::filesystem::path& path, const FreqObservation& obs) {
    std::ofstream os(path);
    if (!os) throw IoError("dump_observation_csv: cannot open " + path.string());
    os.precision(17);
    os << "subcarrier,waveguide,frame,re,im\n";
    for (std::size_t l = 0; l < obs.y.size(); ++l)
        for (Eigen::Index p = 0; p < obs.y[l].cols(); ++p)
            for (Eigen::Index m = 0; m < obs.y[l].rows(); ++m)
                os << l << ',' << m << ',' << p << ',' << obs.y[l](m, p).real() << ',' << obs.y[l](m, p).imag()
                   << '\n';
    if (!os) throw IoError("dump_observation_csv: write failed for " + path.string());
}

}  // namespace jcel
