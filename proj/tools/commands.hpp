#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace rotstar::cli {

struct Options {
    std::filesystem::path config;
    std::filesystem::path out = "out";
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    std::string method = "symmetry";
    std::filesystem::path debug_dir;
    bool full = false;
};

// Exit codes.
constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;

int gen_pattern(const Options& opt);
int render(const Options& opt);
int detect(const Options& opt);
int refine(const Options& opt);
int sweep(const Options& opt);
int report(const Options& opt);

}  // namespace rotstar::cli
