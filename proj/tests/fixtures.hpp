#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <unistd.h>

#include "rfmsm/models.hpp"
#include "rfmsm/siggen.hpp"

namespace rfmsm::support {

/// Two stages of one block each: total downsample 4.
inline ArchitectureDescriptor tiny_resnet() {
    ArchitectureDescriptor a;
    a.stem_channels = 4;
    a.stem_kernel = 5;
    a.stage_channels = {4, 8};
    a.blocks_per_stage = 1;
    return a;
}

inline ArchitectureDescriptor tiny_dilated() {
    ArchitectureDescriptor a = ArchitectureDescriptor::dilated_default();
    a.dilated_channels = 4;
    a.dilations = {1, 2};
    a.probe_pool = 4;
    return a;
}

inline GeneratorConfig short_frames(std::size_t len = 64) {
    GeneratorConfig g;
    g.frame_len = len;
    g.t_res_us = 1.0;
    g.n_pulses_min = 1;
    g.n_pulses_max = len >= 48 ? 2 : 1;
    g.pulse_width_min_us = 8.0;
    g.pulse_width_max_us = 12.0;
    g.pri_min_us = 20.0;
    g.pri_max_us = 24.0;
    g.barker_lengths = {5, 7};
    g.polyphase_lengths = {5, 6};
    g.frank_orders = {2, 3};
    g.lfm_bw_min_hz = 0.05e6;
    g.lfm_bw_max_hz = 0.1e6;
    return g;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("rfmsm-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace rfmsm::support
