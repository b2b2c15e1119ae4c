#include "captnet/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "captnet/checkpoint.hpp"
#include "captnet/config.hpp"
#include "captnet/gradient_suite.hpp"
#include "captnet/metrics.hpp"
#include "captnet/model.hpp"
#include "captnet/ppm.hpp"
#include "captnet/text.hpp"
#include "captnet/trainer.hpp"

namespace fs = std::filesystem;

namespace captnet {

namespace {

/// Contract violation detected by a command; maps to exit code 1.
class CommandError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config, "Configuration file");
    cmd->add_option("--seed", opts.seed, "Overrides every seed in the configuration");
    cmd->add_option("--out", opts.out, "Output directory");
}

RunConfig resolve(const CommonOptions& opts) {
    RunConfig cfg = opts.config.empty() ? RunConfig{} : load_config_file(opts.config);
    if (opts.seed) {
        cfg.model_seed = *opts.seed;
        cfg.train.seed = *opts.seed;
        cfg.data.seed = *opts.seed;
    }
    if (!opts.out.empty()) {
        cfg.io.out = opts.out;
    }
    cfg.validate();
    return cfg;
}

fs::path prepare_out(const RunConfig& cfg) {
    const fs::path dir(cfg.io.out);
    fs::create_directories(dir);
    return dir;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path);
    if (!os) {
        throw CommandError("cannot write '" + path.string() + "'");
    }
    return os;
}

std::string pick(const std::string& flag, const std::string& fallback) {
    return flag.empty() ? fallback : flag;
}

CaptNet load_model(const RunConfig& cfg, const std::string& checkpoint) {
    CaptNet model = CaptNet::build(cfg.model, cfg.model_seed);
    if (!checkpoint.empty()) {
        load_checkpoint_file(checkpoint, model);
    }
    return model;
}

std::vector<PairedSample> dataset_from_manifest(const std::string& path) {
    std::vector<PairedSample> samples;
    for (const auto& row : read_manifest(path)) {
        PairedSample s;
        s.clean = read_ppm(row.clean_path);
        s.degraded = read_ppm(row.degraded_path);
        s.label = row.label;
        s.seed = row.seed;
        if (s.clean.height != s.degraded.height || s.clean.width != s.degraded.width) {
            throw CommandError("sample " + std::to_string(row.sample_id) +
                               ": clean and degraded images differ in size");
        }
        samples.push_back(std::move(s));
    }
    if (samples.empty()) {
        throw CommandError("manifest '" + path + "' lists no samples");
    }
    return samples;
}

Image restore(const CaptNet& model, const Image& degraded) {
    NoGradGuard no_grad;
    Image out = from_batch(model.forward(to_batch(degraded, model.precision())));
    clip01(out);
    return out;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
    const fs::path dir = prepare_out(cfg);
    const auto samples = training_dataset(cfg.data);
    std::vector<ManifestRow> rows;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::ostringstream id;
        id << std::setw(3) << std::setfill('0') << i;
        ManifestRow row{i, samples[i].label, samples[i].seed, "clean_" + id.str() + ".ppm",
                        "degraded_" + id.str() + ".ppm"};
        write_ppm((dir / row.clean_path).string(), samples[i].clean);
        write_ppm((dir / row.degraded_path).string(), samples[i].degraded);
        rows.push_back(row);
    }
    write_manifest((dir / "manifest.csv").string(), rows);
    out << "wrote " << rows.size() << " samples and " << (dir / "manifest.csv").string() << '\n';
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& manifest, const std::string& init,
              bool disable_prompts, std::ostream& out) {
    const fs::path dir = prepare_out(cfg);
    const std::string manifest_path = pick(manifest, cfg.io.manifest);
    const auto dataset = manifest_path.empty() ? training_dataset(cfg.data)
                                               : dataset_from_manifest(manifest_path);
    CaptNet model = load_model(cfg, pick(init, cfg.io.init_checkpoint));
    if (disable_prompts) {
        model.set_prompts_enabled(false);
    }
    const auto trace = train(model, dataset, cfg.train);
    save_checkpoint_file((dir / "model.ckpt").string(), model);
    auto csv = open_out(dir / "loss.csv");
    write_loss_csv(csv, trace);
    out << "trained " << trace.size() << " iterations";
    if (!trace.empty()) {
        out << ", final loss " << trace.back().loss_db << " dB";
    }
    out << "\nwrote " << (dir / "model.ckpt").string() << " and " << (dir / "loss.csv").string()
        << '\n';
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& manifest, const std::string& checkpoint,
             std::ostream& out) {
    const std::string manifest_path = pick(manifest, cfg.io.manifest);
    if (manifest_path.empty()) {
        throw CommandError("eval needs --manifest (or io.manifest)");
    }
    const std::string ckpt = pick(checkpoint, cfg.io.checkpoint);
    std::optional<CaptNet> model;
    if (!ckpt.empty()) {
        model.emplace(load_model(cfg, ckpt));
    }
    const fs::path dir = prepare_out(cfg);
    auto csv = open_out(dir / "metrics.csv");
    csv << "image_id,label,psnr_db,ssim\n";
    double total = 0.0;
    const auto rows = read_manifest(manifest_path);
    for (const auto& row : rows) {
        const Image clean = read_ppm(row.clean_path);
        Image candidate = read_ppm(row.degraded_path);
        if (model) {
            candidate = restore(*model, candidate);
        }
        const double psnr = psnr_metric(candidate, clean);
        const double ssim = ssim_metric(candidate, clean);
        total += psnr;
        csv << row.sample_id << ',' << label_code(row.label) << ',' << format_double(psnr) << ','
            << format_double(ssim) << '\n';
    }
    out << "evaluated " << rows.size() << " samples, mean PSNR "
        << (rows.empty() ? 0.0 : total / rows.size()) << " dB\nwrote "
        << (dir / "metrics.csv").string() << '\n';
    return 0;
}

int cmd_infer(const RunConfig& cfg, const std::string& checkpoint,
              const std::vector<std::string>& inputs, std::ostream& out) {
    const std::string ckpt = pick(checkpoint, cfg.io.checkpoint);
    if (ckpt.empty()) {
        throw CommandError("infer needs --checkpoint (or io.checkpoint)");
    }
    const CaptNet model = load_model(cfg, ckpt);
    const fs::path dir = prepare_out(cfg);
    for (const auto& input : inputs) {
        const fs::path target = dir / ("restored_" + fs::path(input).filename().string());
        write_ppm(target.string(), restore(model, read_ppm(input)));
        out << "wrote " << target.string() << '\n';
    }
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
    const fs::path dir = prepare_out(cfg);
    const auto rows = run_gradient_suite(cfg.model_seed);
    auto csv = open_out(dir / "gradcheck.csv");
    csv << "block,max_rel_error,coordinates,refined,seconds\n";
    bool ok = true;
    out << std::left << std::setw(14) << "block" << std::setw(16) << "max_rel_error"
        << std::setw(10) << "coords" << std::setw(10) << "refined" << "status\n";
    for (const auto& r : rows) {
        const bool pass = r.result.max_rel_error < kGradTolerance;
        ok = ok && pass;
        out << std::left << std::setw(14) << r.name << std::setw(16) << std::scientific
            << std::setprecision(3) << r.result.max_rel_error << std::defaultfloat << std::setw(10)
            << r.result.coordinates << std::setw(10) << r.result.refined << (pass ? "ok" : "FAIL")
            << '\n';
        csv << r.name << ',' << format_double(r.result.max_rel_error) << ','
            << r.result.coordinates << ',' << r.result.refined << ',' << format_double(r.seconds) << '\n';
    }
    return ok ? 0 : 1;
}

int cmd_flops(const RunConfig& cfg, std::size_t heads, std::ostream& out) {
    const fs::path dir = prepare_out(cfg);
    auto csv = open_out(dir / "flops.csv");
    const std::vector<MrapDims> dims{{8, 8, 32}, {16, 16, 32}, {64, 64, 32}, {128, 128, 32}};
    csv << "H,W,C,analytic_sa,analytic_mrap,measured_core\n";
    for (const auto& d : dims) {
        if (d.channels % heads != 0) {
            throw CommandError("--heads must divide " + std::to_string(d.channels));
        }
        const FlopReport r = flop_report(d, heads);
        std::ostringstream row;
        row << d.height << ',' << d.width << ',' << d.channels << ',' << r.analytic_sa << ','
            << r.analytic_mrap << ',' << r.measured_mrap_core;
        csv << row.str() << '\n';
        out << row.str() << '\n';
    }
    return 0;
}

int cmd_cluster(const RunConfig& cfg, const std::string& checkpoint, std::ostream& out) {
    const std::string ckpt = pick(checkpoint, cfg.io.checkpoint);
    if (ckpt.empty()) {
        throw CommandError("cluster needs --checkpoint (or io.checkpoint)");
    }
    const CaptNet model = load_model(cfg, ckpt);
    const auto heldout = heldout_dataset(cfg.data);
    const ClusterReport rep = cluster_report(model, heldout);
    const fs::path dir = prepare_out(cfg);
    auto csv = open_out(dir / "cluster.csv");
    csv << "silhouette_encoder,silhouette_output,n\n"
        << format_double(rep.silhouette_encoder) << ',' << format_double(rep.silhouette_output)
        << ',' << rep.samples << '\n';
    out << "silhouette encoder " << rep.silhouette_encoder << ", output "
        << rep.silhouette_output << " over " << rep.samples << " samples\n";
    return 0;
}

} // namespace

std::vector<ManifestRow> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw CommandError("cannot open manifest '" + path + "'");
    }
    const fs::path base = fs::path(path).parent_path();
    std::vector<ManifestRow> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        if (lineno == 1 && line.rfind("sample_id", 0) == 0) {
            continue;
        }
        const auto cols = split(line, ',');
        if (cols.size() != 5) {
            throw CommandError("manifest line " + std::to_string(lineno) + ": expected 5 columns");
        }
        ManifestRow row;
        try {
            row.sample_id = std::stoull(cols[0]);
            row.label = parse_label(cols[1]);
            row.seed = std::stoull(cols[2]);
        } catch (const std::exception& e) {
            throw CommandError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        auto resolve_path = [&base](const std::string& p) {
            const fs::path fp(p);
            return (fp.is_absolute() ? fp : base / fp).string();
        };
        row.clean_path = resolve_path(cols[3]);
        row.degraded_path = resolve_path(cols[4]);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
    std::ofstream os(path);
    if (!os) {
        throw CommandError("cannot write manifest '" + path + "'");
    }
    os << "sample_id,label,seed,clean_path,degraded_path\n";
    for (const auto& r : rows) {
        os << r.sample_id << ',' << label_code(r.label) << ',' << r.seed << ',' << r.clean_path
           << ',' << r.degraded_path << '\n';
    }
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"CAPTNet all-in-one restoration toolkit", "captnet"};
    app.require_subcommand(1);

    CommonOptions common;
    std::string manifest, checkpoint, init;
    bool disable_prompts = false;
    std::size_t heads = 1;
    std::vector<std::string> inputs;

    auto* synth = app.add_subcommand("synth", "Generate a balanced synthetic dataset");
    auto* trainc = app.add_subcommand("train", "Train a model; writes model.ckpt and loss.csv");
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM over a manifest");
    auto* infer = app.add_subcommand("infer", "Restore PPM images");
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    auto* flops = app.add_subcommand("flops", "Attention cost accounting");
    auto* cluster = app.add_subcommand("cluster", "Silhouette analysis of a trained model");
    for (auto* cmd : {synth, trainc, eval, infer, gradcheck, flops, cluster}) {
        add_common(cmd, common);
    }
    trainc->add_option("--manifest", manifest, "Train on a synthesized manifest");
    trainc->add_option("--init", init, "Warm-start checkpoint");
    trainc->add_flag("--disable-prompts", disable_prompts, "Prompt ablation run");
    eval->add_option("--manifest", manifest, "Dataset manifest");
    eval->add_option("--checkpoint", checkpoint, "Restore degraded images with this model");
    infer->add_option("--checkpoint", checkpoint, "Model checkpoint");
    infer->add_option("inputs", inputs, "PPM images")->required();
    flops->add_option("--heads", heads, "Heads for the instrumented measurement")
        ->check(CLI::PositiveNumber);
    cluster->add_option("--checkpoint", checkpoint, "Trained model checkpoint");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        err << app.help();
        return 2;
    }

    try {
        const RunConfig cfg = resolve(common);
        if (synth->parsed()) return cmd_synth(cfg, out);
        if (trainc->parsed()) return cmd_train(cfg, manifest, init, disable_prompts, out);
        if (eval->parsed()) return cmd_eval(cfg, manifest, checkpoint, out);
        if (infer->parsed()) return cmd_infer(cfg, checkpoint, inputs, out);
        if (gradcheck->parsed()) return cmd_gradcheck(cfg, out);
        if (flops->parsed()) return cmd_flops(cfg, heads, out);
        if (cluster->parsed()) return cmd_cluster(cfg, checkpoint, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    err << app.help();
    return 2;
}

} // namespace captnet
