#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <unistd.h>

#include "cellcloud/error.hpp"

namespace testing_support {

// Code of the cellcloud::Error thrown by fn, or nullopt when nothing is thrown.
template <class Fn>
std::optional<cellcloud::ErrorCode> error_of(Fn&& fn) {
    try {
        fn();
    } catch (const cellcloud::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

template <class Fn>
std::optional<std::size_t> error_line(Fn&& fn) {
    try {
        fn();
    } catch (const cellcloud::Error& e) {
        return e.line();
    }
    return std::nullopt;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("cellcloud_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
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

}  // namespace testing_support
