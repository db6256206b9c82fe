#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cli.hpp"
#include "parreg/errors.hpp"
#include "parreg/grid_io.hpp"
#include "parreg/parallel.hpp"

namespace fs = std::filesystem;
using namespace parreg;
using namespace parreg::cli;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write " + path.string());
    out << text;
}

void emit(const CommandResult& res, const std::string& out_dir) {
    const std::string text = res.report.dump(2) + "\n";
    if (out_dir.empty()) {
        std::cout << text;
        if (res.csv) std::cout << *res.csv;
        return;
    }
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "report.json", text);
    if (res.csv) write_text(fs::path(out_dir) / "study.csv", *res.csv);
    if (res.solution) io::write_grid(fs::path(out_dir) / "solution.json", *res.solution);
    std::cout << text;
}

int fail(int code, const std::string& what) {
    std::cerr << "parreg: " << what << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parameter-dependent maximal regularity: certification, solves, norms, studies and invariant suites."};
    app.require_subcommand(1);

    std::string manifest_path;
    std::string out_dir;
    std::size_t n_workers = 0;
    std::optional<unsigned> seed;
    std::string suite;
    std::string inject;

    auto add_common = [&](CLI::App* sub, bool manifest_required) {
        auto* opt = sub->add_option("--manifest", manifest_path, "Run manifest (JSON)");
        if (manifest_required) opt->required();
        sub->add_option("--out", out_dir, "Output directory for report.json and data files");
        sub->add_option("--workers", n_workers, "Worker threads (default: PARREG_WORKERS or 1)");
        sub->add_option("--seed", seed, "Seed for random probes and presets (overrides the manifest)");
    };
    auto* check = app.add_subcommand("check-ellipticity", "Certify normal (or strong) ellipticity of an operator");
    auto* solve = app.add_subcommand("solve", "Solve a parabolic problem (fullspace | cauchy | variable | manifold)");
    auto* norm = app.add_subcommand("norm", "Parameter-dependent norm of a grid function");
    auto* study = app.add_subcommand("study", "Sweep eta | grid | delta | lambda and tabulate the measured constant");
    auto* verify = app.add_subcommand("verify", "Run a named invariant suite");
    for (auto* sub : {check, solve, norm, study}) add_common(sub, true);
    add_common(verify, false);
    verify->add_option("suite", suite, "Suite name (weights | partition | spaces | operators | fourier | geometry | all)")
        ->required();
    verify->add_option("--inject", inject, "Plant a fault to exercise the suite (broken-bump)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (n_workers > 0) set_workers(n_workers);
        CommandResult res;
        if (*verify) {
            json implicit{{"command", "verify"}, {"suite", suite}, {"inject", inject}};
            std::string hash;
            unsigned s = seed.value_or(1);
            if (!manifest_path.empty()) {
                const auto m = Manifest::load(manifest_path, seed);
                hash = m.hash;
                s = m.seed;
                if (inject.empty()) inject = m.doc.value("inject", std::string());
            } else {
                hash = manifest_hash(implicit);
            }
            res = cmd_verify(suite, inject, s);
            res.report["manifest_hash"] = hash;
        } else {
            const auto m = Manifest::load(manifest_path, seed);
            if (m.doc.contains("command")) {
                const std::string want = m.doc["command"].get<std::string>();
                const std::string got = app.get_subcommands().front()->get_name();
                if (want != got) throw UsageError("manifest is for \"" + want + "\", not \"" + got + "\"");
            }
            if (*check) res = cmd_check_ellipticity(m);
            else if (*solve) res = cmd_solve(m);
            else if (*norm) res = cmd_norm(m);
            else res = cmd_study(m);
        }
        emit(res, out_dir);
        if (res.exit_code != 0) {
            if (res.report.contains("failures")) return fail(res.exit_code, "failed invariants: " + res.report["failures"].dump());
            if (res.report.contains("reason")) return fail(res.exit_code, res.report["reason"].get<std::string>());
        }
        return res.exit_code;
    } catch (const EllipticityError& e) {
        return fail(1, std::string("not elliptic: ") + e.what());
    } catch (const ContractionError& e) {
        return fail(1, std::string("contraction failed: ") + e.what());
    } catch (const UsageError& e) {
        return fail(2, e.what());
    } catch (const ValidationError& e) {
        return fail(2, std::string("validation: ") + e.what());
    } catch (const parreg::Error& e) {
        return fail(2, e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(2, std::string("malformed manifest: ") + e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(2, e.what());
    }
}
