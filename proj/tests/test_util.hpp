#pragma once

// Shared helpers for the test binaries: scratch files and byte-level reads.

#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

namespace testutil {

inline std::filesystem::path scratch_dir() {
    auto dir = std::filesystem::temp_directory_path() /
               ("lens_tests_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string scratch_path(const std::string& name) {
    return (scratch_dir() / name).string();
}

inline std::string write_scratch(const std::string& name, const std::string& content) {
    std::string path = scratch_path(name);
    std::ofstream f(path, std::ios::binary);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    return path;
}

inline std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace testutil
