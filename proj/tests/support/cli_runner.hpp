#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tractgrid/cli.hpp"
#include "tractgrid/dataio.hpp"

namespace oracle {

struct CliRun {
    int code = -1;
    std::string out, err;
};

inline CliRun run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "tractgrid");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    CliRun r;
    r.code = tractgrid::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

// File contents with manifest wall-clock lines dropped; everything else must
// match across reruns.
inline std::string stable_contents(const std::filesystem::path& p) {
    std::istringstream in(tractgrid::read_file(p));
    std::string line, kept;
    while (std::getline(in, line))
        if (line.find("\"wall_clock_seconds\"") == std::string::npos) kept += line + "\n";
    return kept;
}

inline std::map<std::string, std::string> snapshot_dir(const std::filesystem::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files[std::filesystem::relative(e.path(), dir).string()] = stable_contents(e.path());
    return files;
}

} // namespace oracle
