#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>

namespace test_support {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("dipe_test_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

    std::filesystem::path write(const std::string& name, const std::string& contents) const {
        const auto p = path_ / name;
        std::ofstream(p, std::ios::binary) << contents;
        return p;
    }

private:
    std::filesystem::path path_;
};

/// Looks for a benchmark file in $DIPE_DATA_DIR, then ./data and the source tree's data/.
inline std::optional<std::filesystem::path> dataset_path(const std::string& file) {
    std::vector<std::filesystem::path> dirs;
    if (const char* env = std::getenv("DIPE_DATA_DIR")) dirs.emplace_back(env);
    dirs.emplace_back("data");
#ifdef DIPE_SOURCE_DIR
    dirs.emplace_back(std::filesystem::path(DIPE_SOURCE_DIR) / "data");
#endif
    for (const auto& d : dirs) {
        const auto p = d / file;
        if (std::filesystem::exists(p)) return p;
    }
    return std::nullopt;
}

}  // namespace test_support
