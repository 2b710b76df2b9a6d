// voxaug command-line front end.
//
//   voxaug phantom  --seed N --count K --shape X,Y,Z --out DIR
//   voxaug augment  --config FILE --in DIR --out DIR
//   voxaug evaluate --pred DIR --truth DIR --model-id ID --out metrics.csv [--append]
//   voxaug compare  --metrics metrics.csv --model-a A --model-b B --metric dice --region ET
//                   --flips 100000 --bonferroni 36 --seed N
//   voxaug rank     --metrics metrics.csv --out ranks.csv [--normalize]
//
// Failures print a single line "error: <code>: <message>" to stderr and exit
// nonzero (2 for usage errors, 1 otherwise).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "voxaug/batch.hpp"
#include "voxaug/error.hpp"
#include "voxaug/stats.hpp"
#include "voxaug/tables.hpp"

namespace fs = std::filesystem;
using namespace voxaug;

namespace {

Shape parse_shape(const std::string& s) {
    Shape shape{};
    std::stringstream ss(s);
    std::string part;
    int n = 0;
    while (std::getline(ss, part, ',')) {
        if (n == 3) {
            fail("invalid_argument", "shape must be X,Y,Z");
        }
        try {
            std::size_t used = 0;
            shape[n] = std::stoi(part, &used);
            if (used != part.size()) {
                throw std::invalid_argument(part);
            }
        } catch (const std::exception&) {
            fail("invalid_argument", "shape component '" + part + "' is not an integer");
        }
        ++n;
    }
    if (n != 3) {
        fail("invalid_argument", "shape must be X,Y,Z");
    }
    return shape;
}

std::string one_line(std::string s) {
    for (char& c : s) {
        if (c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic 3-D volume augmentation and segmentation evaluation"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker threads (default: VOXAUG_THREADS or hardware)");

    // phantom
    auto* phantom = app.add_subcommand("phantom", "Generate synthetic 4-channel subjects with labels");
    std::uint64_t ph_seed = 0;
    std::size_t ph_count = 1;
    std::string ph_shape = "64,64,64";
    std::string ph_out;
    phantom->add_option("--seed", ph_seed, "Master seed")->required();
    phantom->add_option("--count", ph_count, "Number of subjects")->required();
    phantom->add_option("--shape", ph_shape, "Grid shape X,Y,Z (each >= 16)");
    phantom->add_option("--out", ph_out, "Output directory")->required();

    // augment
    auto* augment = app.add_subcommand("augment", "Patch-extract and augment every subject in a directory");
    std::string au_config, au_in, au_out;
    augment->add_option("--config", au_config, "Pipeline configuration (JSON)")->required();
    augment->add_option("--in", au_in, "Input directory (overrides config)");
    augment->add_option("--out", au_out, "Output directory (overrides config)");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Dice and HD95 per subject for ET, WT, TC");
    std::string ev_pred, ev_truth, ev_model, ev_out;
    bool ev_append = false;
    evaluate->add_option("--pred", ev_pred, "Prediction directory")->required();
    evaluate->add_option("--truth", ev_truth, "Ground-truth directory")->required();
    evaluate->add_option("--model-id", ev_model, "Model identifier")->required();
    evaluate->add_option("--out", ev_out, "Output metrics CSV")->required();
    evaluate->add_flag("--append", ev_append, "Merge into an existing CSV, replacing rows of this model");

    // compare
    auto* compare = app.add_subcommand("compare", "One-sided sign-flip test of model A > model B");
    std::string cm_metrics, cm_a, cm_b, cm_metric = "dice", cm_region = "ET", cm_out;
    std::uint64_t cm_flips = 100000, cm_seed = 0;
    int cm_bonf = 1;
    bool cm_exhaustive = false;
    compare->add_option("--metrics", cm_metrics, "Metrics CSV")->required();
    compare->add_option("--model-a", cm_a, "Model expected to be better")->required();
    compare->add_option("--model-b", cm_b, "Reference model")->required();
    compare->add_option("--metric", cm_metric, "dice or hd95");
    compare->add_option("--region", cm_region, "ET, WT or TC");
    compare->add_option("--flips", cm_flips, "Number of sign flips (identity included)");
    compare->add_option("--bonferroni", cm_bonf, "Number of tests for Bonferroni correction");
    compare->add_option("--seed", cm_seed, "Seed for the sign-flip stream");
    compare->add_flag("--exhaustive", cm_exhaustive, "Enumerate all 2^n sign vectors");
    compare->add_option("--out", cm_out, "Also write the result as JSON");

    // rank
    auto* rank = app.add_subcommand("rank", "Mean mid-rank of every model over subjects and metrics");
    std::string rk_metrics, rk_out;
    bool rk_normalize = false;
    rank->add_option("--metrics", rk_metrics, "Metrics CSV")->required();
    rank->add_option("--out", rk_out, "Output ranks CSV")->required();
    rank->add_flag("--normalize", rk_normalize, "Divide rank scores by the number of models");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        const unsigned workers = threads > 0 ? threads : default_threads();
        if (*phantom) {
            const auto ids = run_phantom(ph_seed, ph_count, parse_shape(ph_shape), ph_out, workers);
            std::cout << "wrote " << ids.size() << " subjects to " << ph_out << "\n";
        } else if (*augment) {
            const PipelineConfig config = load_config(au_config);
            const fs::path in = !au_in.empty() ? fs::path(au_in) : config.input_dir.value_or(fs::path());
            const fs::path out = !au_out.empty() ? fs::path(au_out) : config.output_dir.value_or(fs::path());
            if (in.empty() || out.empty()) {
                fail("invalid_argument", "input and output directories are required (--in/--out or config)");
            }
            const auto summary = run_augment(config, in, out, workers);
            std::cout << "augmented " << summary.subjects << " subjects (" << summary.untouched
                      << " untouched) into " << out.string() << "\n";
        } else if (*evaluate) {
            MetricTable table = run_evaluate(ev_pred, ev_truth, ev_model, workers);
            if (ev_append && fs::exists(ev_out)) {
                MetricTable existing = read_metrics_csv(fs::path(ev_out));
                std::erase_if(existing, [&](const MetricRecord& r) { return r.model_id == ev_model; });
                table.insert(table.end(), existing.begin(), existing.end());
            }
            write_metrics_csv(fs::path(ev_out), table);
            std::cout << "wrote " << table.size() << " rows to " << ev_out << "\n";
        } else if (*compare) {
            const MetricTable table = read_metrics_csv(fs::path(cm_metrics));
            const auto metric = metric_kind_from_string(cm_metric);
            const auto region = region_from_string(cm_region);
            auto d = paired_differences(table, cm_a, cm_b, metric, region);
            // HD95 is lower-is-better, so "A better than B" means B - A > 0.
            if (metric == MetricKind::hd95) {
                for (double& v : d) {
                    v = -v;
                }
            }
            SignFlipOptions opt;
            opt.n_flips = cm_flips;
            opt.seed = cm_seed;
            opt.bonferroni_m = cm_bonf;
            opt.sampling = cm_exhaustive ? FlipSampling::exhaustive : FlipSampling::monte_carlo;
            opt.threads = workers;
            const TestResult r = sign_flip_test(d, opt);
            auto j = to_json(r);
            j["model_a"] = cm_a;
            j["model_b"] = cm_b;
            j["metric"] = to_string(metric);
            j["region"] = to_string(region);
            j["n_subjects"] = d.size();
            j["bonferroni_m"] = cm_bonf;
            if (!cm_out.empty()) {
                std::ofstream os(cm_out);
                os << j.dump(2) << "\n";
                if (!os) {
                    fail("io_error", "cannot write '" + cm_out + "'");
                }
            }
            std::cout << j.dump() << "\n";
        } else if (*rank) {
            const MetricTable table = read_metrics_csv(fs::path(rk_metrics));
            const RankTable ranks = rank_models(table, all_metric_regions(), rk_normalize);
            write_ranks_csv(fs::path(rk_out), ranks);
            write_ranks_csv(std::cout, ranks);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.code() << ": " << one_line(e.what()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}
