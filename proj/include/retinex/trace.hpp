#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "retinex/solver.hpp"

namespace retinex {

inline nlohmann::ordered_json to_json(const StageRecord& r) {
    nlohmann::ordered_json j;
    j["stage"] = r.stage;
    j["fidelity"] = r.energy.fidelity;
    j["smoothness"] = r.energy.smoothness;
    j["potential"] = r.energy.potential;
    j["energy"] = r.energy.total();
    j["cg_iterations"] = r.cg_iterations;
    j["cg_residual"] = r.cg_residual;
    j["backtracks"] = r.backtracks;
    j["step_accepted"] = r.step_accepted;
    j["g_before"] = r.g_before;
    j["g_after"] = r.g_after;
    j["lambda_I"] = r.lambda_I;
    j["lambda_R"] = r.lambda_R;
    return j;
}

/// One JSON object per line, one line per stage.
inline void write_trace(std::ostream& out, const std::vector<StageRecord>& trace) {
    for (const StageRecord& r : trace) out << to_json(r).dump() << '\n';
}

inline void write_trace(const std::filesystem::path& path, const std::vector<StageRecord>& trace) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    write_trace(out, trace);
    if (!out) throw IoError("write failure on '" + path.string() + "'");
}

inline std::vector<StageRecord> read_trace(std::istream& in) {
    std::vector<StageRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        StageRecord r;
        r.stage = j.at("stage").get<int>();
        r.energy.fidelity = j.at("fidelity").get<double>();
        r.energy.smoothness = j.at("smoothness").get<double>();
        r.energy.potential = j.at("potential").get<double>();
        r.cg_iterations = j.at("cg_iterations").get<int>();
        r.cg_residual = j.at("cg_residual").get<double>();
        r.backtracks = j.at("backtracks").get<int>();
        r.step_accepted = j.at("step_accepted").get<bool>();
        r.g_before = j.at("g_before").get<double>();
        r.g_after = j.at("g_after").get<double>();
        r.lambda_I = j.at("lambda_I").get<double>();
        r.lambda_R = j.at("lambda_R").get<double>();
        out.push_back(r);
    }
    return out;
}

}  // namespace retinex
