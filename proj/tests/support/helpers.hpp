#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "reportgap/reportgap.hpp"

namespace testing_support {

using namespace reportgap;

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("reportgap_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::filesystem::path write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream(path, std::ios::binary) << content;
    return path;
}

/// Noise-free continuous synthetic spec: 2 years around the closure.
inline DgpSpec small_spec(int municipalities = 8, std::uint64_t seed = 3) {
    DgpSpec s;
    s.municipalities = municipalities;
    s.start = calendar::make_date(2019, 1, 7);
    s.end = calendar::make_date(2021, 6, 27);
    s.noise_sd = 0.0;
    s.seed = seed;
    return s;
}

/// Panel with key columns and the given weights only (no treatments).
inline PanelDataset bare_panel(int municipalities, DateRange range) {
    PanelDataset p{WeekGrid(range)};
    for (int m = 1; m <= municipalities; ++m)
        for (int w = 0; w < p.grid().size(); ++w) p.add_cell(m, w);
    return p;
}

} // namespace testing_support
