// Command-line harness: data generation, source training, adaptation, evaluation, reports and sweeps.

#include "up2d/log.hpp"
#include "up2d/pipeline.hpp"
#include "up2d/report.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace up2d;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;
    std::vector<std::string> toggles;
    std::string out_dir = "runs/out";
    bool quiet = false;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "key = value configuration file");
        app->add_option("--seed", seed, "master seed");
        app->add_option("--set", sets, "override a configuration key (key=value)");
        app->add_option("--toggle", toggles, "component override (rpf=on|standard|off, ugema=on|plain_ema|off, "
                                             "entropy_filter=on|full|off) or preset name");
        app->add_option("--out-dir", out_dir, "output directory");
        app->add_flag("--quiet", quiet, "only print warnings");
    }

    RunConfig config() const {
        RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
            cfg.set(s.substr(0, eq), s.substr(eq + 1));
        }
        for (const auto& t : toggles) cfg.apply_toggle(t);
        if (seed) cfg.seed = *seed;
        return cfg;
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
}

void write_eval(const fs::path& dir, const std::string& name, const EvalReport& report) {
    std::ofstream csv(dir / (name + ".csv"));
    report.write_csv(csv);
    std::ofstream md(dir / (name + ".md"));
    report.write_markdown(md, name);
    write_text(dir / (name + ".json"), report_to_json(report).dump(2) + "\n");
}

DataBundle data_for(const RunConfig& cfg, const std::string& data_dir) {
    const fs::path dir = data_dir.empty() ? fs::path(cfg.data_dir) : fs::path(data_dir);
    if (fs::exists(dir / "source" / "manifest.json")) return load_data(dir);
    log_info("no dataset at " + dir.string() + ", generating it in memory from the configuration");
    return generate_data(cfg);
}

const std::vector<Sample>& split(const DataBundle& data, const std::string& name) {
    if (name == "source") return data.source;
    if (name == "source_val") return data.source_val;
    if (name == "target") return data.target;
    if (name == "target_test") return data.target_test;
    throw ConfigError("unknown split '" + name + "'");
}

nlohmann::json run_adaptation(const RunConfig& cfg, const Checkpoint& source, const DataBundle& data,
                              const fs::path& dir, bool per_epoch_eval) {
    const auto hook = per_epoch_eval ? evaluation_hook(data.target_test, cfg.eval_threshold) : EpochHook{};
    const auto result = adapt(source, strip_labels(data.target), cfg, hook);
    const auto final_eval = evaluate(result.student.instantiate(), data.target_test, cfg.eval_threshold);
    const auto summary = report_to_json(final_eval);
    write_run(dir, result, cfg, summary);
    write_eval(dir, "target_test", final_eval);
    log_info(dir.string() + ": mean Dice " + std::to_string(final_eval.mean_dice()) + ", teacher updates " +
             std::to_string(result.update_count) + ", ground-truth reads " + std::to_string(result.ground_truth_reads));
    return summary;
}

std::vector<std::string> default_values(const std::string& param) {
    if (param == "beta") return {"0", "0.05", "0.1", "0.15", "0.2", "0.25", "0.3", "0.35", "0.4", "0.45"};
    if (param == "alpha") return {"0.9", "0.95", "0.99", "0.999"};
    if (param == "s") return {"0.15", "0.2", "0.25", "0.3", "0.35", "0.4", "0.45"};
    if (param == "lattice") {
        std::vector<std::string> names;
        for (const auto& p : ablation_lattice()) names.push_back(p.name);
        return names;
    }
    throw ConfigError("unknown sweep parameter '" + param + "' (beta, alpha, s, lattice)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Source-free domain adaptation for disc/cup segmentation"};
    app.require_subcommand(1);

    Common gen_opts, train_opts, adapt_opts, eval_opts, sweep_opts;
    std::string data_dir, source_path, checkpoint_path, split_name = "target_test", sweep_param = "s";
    std::vector<std::string> runs, sweep_values;
    bool per_epoch_eval = false;
    std::string report_out = "runs/report";

    auto* gen = app.add_subcommand("gen-data", "write the synthetic source and target splits");
    gen_opts.attach(gen);

    auto* train = app.add_subcommand("train-source", "supervised training on the labeled source split");
    train_opts.attach(train);
    train->add_option("--data-dir", data_dir, "dataset directory written by gen-data");

    auto* adapt_cmd = app.add_subcommand("adapt", "source-free adaptation on the unlabeled target split");
    adapt_opts.attach(adapt_cmd);
    adapt_cmd->add_option("--source", source_path, "source checkpoint")->required();
    adapt_cmd->add_option("--data-dir", data_dir, "dataset directory written by gen-data");
    adapt_cmd->add_flag("--eval-epochs", per_epoch_eval, "evaluate the student on target_test after every epoch");

    auto* eval_cmd = app.add_subcommand("eval", "Dice and ASSD of a checkpoint on one split");
    eval_opts.attach(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate")->required();
    eval_cmd->add_option("--data-dir", data_dir, "dataset directory written by gen-data");
    eval_cmd->add_option("--split", split_name, "source, source_val, target or target_test");

    auto* report_cmd = app.add_subcommand("report", "tables and curves from adaptation run directories");
    report_cmd->add_option("--runs", runs, "run directories")->required();
    report_cmd->add_option("--out-dir", report_out, "output directory");

    auto* sweep = app.add_subcommand("sweep", "adapt once per value of a hyperparameter or ablation preset");
    sweep_opts.attach(sweep);
    sweep->add_option("--source", source_path, "source checkpoint")->required();
    sweep->add_option("--data-dir", data_dir, "dataset directory written by gen-data");
    sweep->add_option("--param", sweep_param, "beta, alpha, s or lattice");
    sweep->add_option("--values", sweep_values, "values to sweep (defaults per parameter)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto cfg = gen_opts.config();
            if (gen_opts.quiet) set_log_level(LogLevel::Warn);
            const fs::path out = gen_opts.out_dir;
            write_data(cfg, out);
            cfg.save(out / "config.txt");
            log_info("wrote dataset to " + out.string());
        } else if (train->parsed()) {
            const auto cfg = train_opts.config();
            if (train_opts.quiet) set_log_level(LogLevel::Warn);
            const fs::path out = train_opts.out_dir;
            fs::create_directories(out);
            const auto data = data_for(cfg, data_dir);
            const auto result = train_source(data.source, source_train_config(cfg));
            save_checkpoint(out / "source.ckpt", result.checkpoint);
            std::vector<nlohmann::json> losses;
            for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
                losses.push_back({{"epoch", e}, {"loss", result.epoch_loss[e]}});
            write_jsonl(out / "source_loss.jsonl", losses);
            const SegNet net = result.checkpoint.instantiate();
            write_eval(out, "source_val", evaluate(net, data.source_val, cfg.eval_threshold));
            write_eval(out, "target_test", evaluate(net, data.target_test, cfg.eval_threshold));
            cfg.save(out / "config.txt");
            log_info("wrote " + (out / "source.ckpt").string());
        } else if (adapt_cmd->parsed()) {
            const auto cfg = adapt_opts.config();
            if (adapt_opts.quiet) set_log_level(LogLevel::Warn);
            run_adaptation(cfg, load_checkpoint(source_path), data_for(cfg, data_dir), adapt_opts.out_dir,
                           per_epoch_eval);
        } else if (eval_cmd->parsed()) {
            const auto cfg = eval_opts.config();
            if (eval_opts.quiet) set_log_level(LogLevel::Warn);
            const fs::path out = eval_opts.out_dir;
            fs::create_directories(out);
            const auto data = data_for(cfg, data_dir);
            const auto report =
                evaluate(load_checkpoint(checkpoint_path).instantiate(), split(data, split_name), cfg.eval_threshold);
            write_eval(out, split_name, report);
            std::cout << report_to_json(report).dump(2) << '\n';
        } else if (report_cmd->parsed()) {
            std::vector<fs::path> dirs(runs.begin(), runs.end());
            write_report(dirs, report_out);
            log_info("wrote " + (fs::path(report_out) / "report.md").string());
        } else if (sweep->parsed()) {
            const auto base = sweep_opts.config();
            if (sweep_opts.quiet) set_log_level(LogLevel::Warn);
            const fs::path out = sweep_opts.out_dir;
            fs::create_directories(out);
            const auto data = data_for(base, data_dir);
            const auto source = load_checkpoint(source_path);
            const auto values = sweep_values.empty() ? default_values(sweep_param) : sweep_values;
            std::ofstream csv(out / "sweep.csv");
            csv << "param,value,mean_dice,disc_dice,cup_dice,disc_assd,cup_assd\n";
            std::vector<fs::path> dirs;
            for (const auto& v : values) {
                RunConfig cfg = base;
                if (sweep_param == "lattice") apply_preset(cfg, v);
                else cfg.set(sweep_param, v);
                const fs::path dir = out / (sweep_param + "_" + v);
                const auto s = run_adaptation(cfg, source, data, dir, true);
                csv << sweep_param << ',' << v << ',' << s["mean_dice"] << ',' << s["disc"]["dice"] << ','
                    << s["cup"]["dice"] << ',' << s["disc"]["assd"] << ',' << s["cup"]["assd"] << '\n'
                    << std::flush;
                dirs.push_back(dir);
            }
            write_report(dirs, out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
