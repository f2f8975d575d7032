#ifndef ONET_TEST_UTIL_HPP
#define ONET_TEST_UTIL_HPP

#include <atomic>
#include <filesystem>
#include <string>

#include <onet/netmodel.hpp>

namespace onet::test {

inline std::string data_path(const std::string& rel) { return std::string(ONET_DATA_DIR) + "/" + rel; }

inline std::string test_path(const std::string& rel) { return std::string(ONET_TEST_DIR) + "/" + rel; }

/// Fresh scratch directory removed on destruction.
class TempDir {
  public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("onet_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

inline FiberSpan smf_span(const std::string& id, double length_km = 80.0, double gamma = 1.3) {
    return {id, length_km, 0.2, -21.27, gamma};
}

/// A link made of `spans` identical transparent 80 km spans.
inline Link transparent_link(const std::string& id, const std::string& from, const std::string& to,
                             std::size_t spans = 1, double length_km = 80.0, double gamma = 1.3) {
    Link l{id, from, to, {}};
    for (std::size_t i = 0; i < spans; ++i) {
        auto s = smf_span(id + ".S" + std::to_string(i + 1), length_km, gamma);
        const double g = s.loss_db();
        l.elements.emplace_back(s);
        l.elements.emplace_back(Amplifier{id + ".A" + std::to_string(i + 1), g, 5.0, 0.0});
    }
    return l;
}

/// Single-channel grid with B_ch = B_wdm = 32 GHz around 193.4 THz.
inline SpectrumGrid single_channel_grid() {
    SpectrumGrid g;
    g.bands = {{"C", 193.384, 193.416}};
    g.spacing_ghz = 32.0;
    g.symbol_rate_gbd = 32.0;
    g.b_ref_ghz = 12.5;
    return g;
}

}  // namespace onet::test

#endif
