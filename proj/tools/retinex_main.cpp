#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "retinex/cli/job.hpp"

namespace cli = retinex::cli;

int main(int argc, char** argv) {
    cli::JobSpec spec;
    try {
        auto parsed = cli::parse_config(argc, argv);
        if (!parsed.job) {
            std::cout << parsed.message;
            return parsed.exit_code;
        }
        spec = std::move(*parsed.job);
    } catch (const cli::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    }

    cli::JobSummary summary;
    try {
        summary = cli::run_job(spec);
    } catch (const cli::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    }

    for (const auto& r : summary.images) {
        if (r.ok) {
            std::cout << "ok    " << r.input.string() << "  " << std::fixed << std::setprecision(3)
                      << r.wall_time << " s  energy " << std::scientific << std::setprecision(6)
                      << r.final_energy.total() << '\n';
        } else {
            std::cout << "FAIL  " << r.input.string() << "  " << r.error << '\n';
        }
    }
    std::cout << summary.images.size() - summary.failures() << " succeeded, " << summary.failures()
              << " failed\n";

    std::ofstream out(spec.output_dir / "summary.json", std::ios::trunc);
    if (out) out << cli::to_json(summary).dump(2) << '\n';
    return summary.exit_code();
}
