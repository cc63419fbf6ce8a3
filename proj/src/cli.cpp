#include "mvd/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "mvd/config.hpp"
#include "mvd/service.hpp"
#include "mvd/vae.hpp"

namespace mvd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

volatile std::sig_atomic_t g_interrupted = 0;
void on_interrupt(int) { g_interrupted = 1; }

struct Common {
    std::string config_path;
    std::string out_override;
    std::string preset_override;
    long seed_override = -1;
};

RunConfig load_config(const Common& c) {
    if (c.config_path.empty()) throw ConfigError("--config is required");
    RunConfig cfg = RunConfig::from_file(c.config_path);
    if (!c.out_override.empty()) cfg.set("output", "dir", c.out_override);
    if (c.seed_override >= 0) cfg.override_seeds(static_cast<uint64_t>(c.seed_override));
    return cfg;
}

fs::path prepare_out(const RunConfig& cfg) {
    fs::path out = cfg.get("output", "dir");
    std::error_code ec;
    fs::create_directories(out, ec);
    if (!fs::exists(out)) throw IoError("cannot create output dir " + out.string());
    std::ofstream echo(out / "config_echo.cfg");
    echo << cfg.echo();
    return out;
}

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
    auto* opt = cmd->add_option("--config", c.config_path, "run configuration file");
    if (config_required) opt->required();
    cmd->add_option("--out", c.out_override, "output directory override");
    cmd->add_option("--seed", c.seed_override, "base seed override (rewrites all five seeds)");
    cmd->add_option("--preset", c.preset_override, "model preset override for this subcommand");
}

Dataset plan_slice(const ScenarioPlan& plan, const DatasetSplits& data, bool victim_side) {
    std::vector<long> idx(static_cast<size_t>(data.train.size()));
    for (long i = 0; i < data.train.size(); ++i) idx[static_cast<size_t>(i)] = i;
    Rng rng((victim_side ? plan.seeds.victim : plan.seeds.attack) ^ 0x51cedULL);
    rng.shuffle(idx);
    const long cap = victim_side ? plan.schedule.victim_train_cap : plan.schedule.attacker_train_cap;
    if (cap > 0 && cap < data.train.size()) idx.resize(static_cast<size_t>(cap));
    return data.train.subset(idx, Split::train);
}

void save_training_report(const fs::path& out, const std::string& name, const TrainingReport& r) {
    json j;
    j["per_epoch_loss"] = r.per_epoch_loss;
    j["final_test_accuracy"] = r.final_test_accuracy;
    j["epochs"] = r.epochs;
    std::ofstream f(out / (name + "_report.json"));
    f << j.dump(2) << "\n";
}

int cmd_train_classifier(const Common& c, const std::string& role) {
    RunConfig cfg = load_config(c);
    ScenarioPlan plan = cfg.to_plan();
    const fs::path out = prepare_out(cfg);
    const bool victim = role != "shadow";
    std::string preset_name = victim ? plan.victim_classifier_preset : plan.shadow_classifier_preset;
    if (!c.preset_override.empty()) preset_name = c.preset_override;
    if (preset_name.empty()) throw ConfigError("no " + role + " classifier preset configured");

    DatasetSplits data = load_dataset(plan.dataset, plan.data_root);
    Dataset slice = plan_slice(plan, data, victim);
    ClassifierModel model = build_classifier(preset(preset_name), victim ? plan.seeds.victim : plan.seeds.shadow);
    const auto report = train_classifier(model, slice, &data.test, plan.schedule.cls_epochs, plan.schedule.cls_lr,
                                         plan.schedule.cls_batch, victim ? plan.seeds.victim : plan.seeds.shadow);
    save_model(model, (out / (role + "_classifier.mvdm")).string());
    save_training_report(out, role + "_classifier", report);
    std::cout << role << " classifier test accuracy: " << report.final_test_accuracy << "\n";
    return 0;
}

int cmd_train_vae(const Common& c) {
    RunConfig cfg = load_config(c);
    ScenarioPlan plan = cfg.to_plan();
    const fs::path out = prepare_out(cfg);
    DatasetSplits data = load_dataset(plan.dataset, plan.data_root);
    Dataset slice = plan_slice(plan, data, false);
    EncoderModel encoder = build_encoder(preset(plan.attacker_encoder_preset), plan.seeds.attack);
    DecoderModel decoder = build_decoder(preset(plan.decoder_preset), plan.seeds.attack + 1);
    const auto report = train_vae(encoder, decoder, slice, plan.schedule.vae_iter, plan.schedule.vae_lr,
                                  plan.schedule.vae_batch, plan.seeds.attack);
    save_model(encoder, (out / "attacker_encoder.mvdm").string());
    save_model(decoder, (out / "decoder_phase1.mvdm").string());
    std::cout << "vae loss " << report.initial_loss << " -> " << report.final_loss << "\n";
    return 0;
}

int cmd_calibrate(const Common& c, const std::string& encoder_ckpt, std::string decoder_ckpt) {
    RunConfig cfg = load_config(c);
    ScenarioPlan plan = cfg.to_plan();
    const fs::path out = prepare_out(cfg);
    if (decoder_ckpt.empty()) decoder_ckpt = (out / "decoder_phase1.mvdm").string();
    if (encoder_ckpt.empty()) throw ConfigError("--encoder checkpoint is required");

    DatasetSplits data = load_dataset(plan.dataset, plan.data_root);
    Dataset slice = plan_slice(plan, data, false);
    if (plan.calibration_rate < 1.0) slice = stratified_sample(slice, plan.calibration_rate, plan.seeds.attack + 5);

    BlackBoxEncoder oracle(load_encoder(encoder_ckpt), plan.seeds.session);
    DecoderModel decoder = load_decoder(decoder_ckpt);
    CalibrationSet cal = query_encoder(oracle, slice, encoder_ckpt);
    const auto report = calibrate_decoder(decoder, cal, plan.schedule.cal_iter, plan.schedule.cal_lr,
                                          plan.schedule.cal_batch, plan.seeds.attack + 6);
    save_model(decoder, (out / "decoder_calibrated.mvdm").string());
    std::cout << "calibration loss " << report.initial_loss << " -> " << report.final_loss << " over "
              << report.query_count << " queries\n";
    return 0;
}

int cmd_train_mvd(const Common& c, const std::string& encoder_ckpt, const std::string& classifier_ckpt,
                  std::string decoder_ckpt) {
    RunConfig cfg = load_config(c);
    ScenarioPlan plan = cfg.to_plan();
    const fs::path out = prepare_out(cfg);
    if (decoder_ckpt.empty()) decoder_ckpt = (out / "decoder_phase1.mvdm").string();
    if (encoder_ckpt.empty() || classifier_ckpt.empty())
        throw ConfigError("--encoder and --classifier checkpoints are required");

    DatasetSplits data = load_dataset(plan.dataset, plan.data_root);
    Dataset slice = plan_slice(plan, data, false);
    EncoderModel encoder = load_encoder(encoder_ckpt);
    ClassifierModel classifier = load_classifier(classifier_ckpt);
    DecoderModel decoder = load_decoder(decoder_ckpt);
    EncoderHandle handle = EncoderHandle::white_box(&encoder, &slice, plan.seeds.attack + 13);
    const auto report = train_mvd(decoder, handle, classifier, plan.attack);
    save_model(decoder, (out / "decoder_mvd.mvdm").string());
    std::cout << "adversarial objective " << report.objective_curve.front() << " -> " << report.objective_curve.back()
              << "\n";
    return 0;
}

void save_scenario_artifacts(ScenarioContext& ctx, const DecoderModel& mvd, const fs::path& out) {
    save_model(ctx.victim_classifier, (out / "victim_classifier.mvdm").string());
    if (ctx.shadow_classifier) save_model(*ctx.shadow_classifier, (out / "shadow_classifier.mvdm").string());
    save_model(ctx.deployment_encoder(), (out / "deployment_encoder.mvdm").string());
    save_model(ctx.benign_decoder(), (out / "benign_decoder.mvdm").string());
    save_model(mvd, (out / "mvd_decoder.mvdm").string());
    write_cache(ctx.subset.data, (out / "eval_subset.mvdd").string());
    json meta;
    meta["seed"] = ctx.subset.seed;
    meta["source_indices"] = ctx.subset.source_indices;
    meta["class_histogram"] = ctx.subset.class_histogram;
    std::ofstream f(out / "eval_subset_meta.json");
    f << meta.dump(2) << "\n";
}

int cmd_attack(const Common& c) {
    RunConfig cfg = load_config(c);
    ScenarioPlan plan = cfg.to_plan();
    const fs::path out = prepare_out(cfg);
    ScenarioContext ctx = prepare_scenario(plan);
    DecoderModel mvd;
    AdversarialBatch batch;
    AttackReport report = execute_attack(ctx, plan.attack, &mvd, &batch);
    save_scenario_artifacts(ctx, mvd, out);
    render_report({report}, (out / "reports").string(), &batch,
                  {ctx.data.test.shape()[0], ctx.data.test.shape()[1], ctx.data.test.shape()[2]}, 10);
    std::cout << "success rate: " << report.success_rate << " (l2 vs reconstruction mean "
              << report.l2_vs_reconstruction.mean << ")\n";
    return 0;
}

int cmd_evaluate(const Common& c, const std::string& decoder_ckpt) {
    RunConfig cfg = load_config(c);
    ScenarioPlan plan = cfg.to_plan();
    const fs::path out = prepare_out(cfg);
    if (decoder_ckpt.empty()) throw ConfigError("--decoder checkpoint is required");
    ScenarioContext ctx = prepare_scenario(plan);
    DecoderModel decoder = load_decoder(decoder_ckpt);

    Tensor z = subset_latents(ctx);
    AdversarialBatch batch = generate_from_latents(decoder, z, ctx.subset.data.features(), &ctx.benign_decoder());
    batch.clean_predictions = ctx.victim_classifier.predict(batch.reconstructions);
    batch.adversarial_predictions = ctx.victim_classifier.predict(batch.adversarials);
    std::vector<int> labels;
    for (long i = 0; i < ctx.subset.data.size(); ++i) labels.push_back(ctx.subset.data.label_of(i));

    AttackReport report;
    report.threat_model = threat_model_name(plan.threat_model);
    report.attack_name = "mvd";
    report.dataset = plan.dataset;
    report.mode = plan.attack.targeted() ? SuccessMode::targeted : SuccessMode::non_targeted;
    report.target = plan.attack.target.value_or(-1);
    report.success_rate = attack_success_rate(batch.adversarial_predictions, labels, report.mode, report.target);
    report.evaluated = ctx.subset.data.size();
    report.metrics = classification_metrics(batch.adversarial_predictions, labels, ctx.data.test.class_count());
    const auto [orig, recon] = distortion_stats(batch);
    report.l2_vs_original = orig;
    report.l2_vs_reconstruction = recon;
    report.config_echo = plan.echo();
    render_report({report}, (out / "reports").string(), &batch,
                  {ctx.data.test.shape()[0], ctx.data.test.shape()[1], ctx.data.test.shape()[2]}, 10);
    std::cout << "success rate: " << report.success_rate << "\n";
    return 0;
}

int cmd_targeted_matrix(const Common& c) {
    RunConfig cfg = load_config(c);
    ScenarioPlan plan = cfg.to_plan();
    const fs::path out = prepare_out(cfg);
    ScenarioContext ctx = prepare_scenario(plan);
    TargetedMatrixResult result = targeted_matrix(ctx);
    render_report(result.reports, (out / "reports").string());
    std::ofstream table(out / "targeted_matrix.tsv");
    table << targeted_matrix_tsv(plan.dataset, {{threat_model_name(plan.threat_model), result.summary}});
    std::cout << "targeted success worst/avg/best: " << result.summary.summary.min << " / " << result.summary.summary.mean
              << " / " << result.summary.summary.max << "\n";
    return 0;
}

int cmd_sweep_calibration(const Common& c) {
    RunConfig cfg = load_config(c);
    ScenarioPlan plan = cfg.to_plan();
    const fs::path out = prepare_out(cfg);
    if (!encoder_is_black_box(plan.threat_model))
        throw ConfigError("sweep-calibration needs a black-box-encoder threat model");
    const auto rates = cfg.get_list("sweep", "calibration_rates");
    ScenarioContext ctx = prepare_scenario(plan);

    auto factory = [&]() { return ctx.vae_only_decoder->clone(); };
    auto pipeline = [&](DecoderModel& decoder, const CalibrationSet& cal) -> std::pair<double, double> {
        EncoderHandle handle = EncoderHandle::black_box(&cal);
        train_mvd(decoder, handle, ctx.attack_classifier(), ctx.plan.attack);
        Tensor z = subset_latents(ctx);
        AdversarialBatch batch = generate_from_latents(decoder, z, ctx.subset.data.features(), &ctx.benign_decoder());
        batch.adversarial_predictions = ctx.victim_classifier.predict(batch.adversarials);
        std::vector<int> labels;
        for (long i = 0; i < ctx.subset.data.size(); ++i) labels.push_back(ctx.subset.data.label_of(i));
        const double success = attack_success_rate(batch.adversarial_predictions, labels,
                                                   ctx.plan.attack.targeted() ? SuccessMode::targeted : SuccessMode::non_targeted,
                                                   ctx.plan.attack.target.value_or(-1));
        const auto [_, vs_recon] = distortion_stats(batch);
        return {success, vs_recon.mean};
    };
    const auto rows = calibration_sweep(rates, ctx.attacker_train, *ctx.oracle, factory, pipeline,
                                        plan.schedule.cal_iter, plan.schedule.cal_lr, plan.schedule.cal_batch,
                                        plan.seeds.attack + 17);
    std::ofstream table(out / "calibration_sweep.tsv");
    table << sweep_table_tsv(rows);
    std::vector<double> xs, success, l2;
    for (const auto& r : rows) {
        xs.push_back(r.rate);
        success.push_back(r.success_rate);
        l2.push_back(r.mean_l2);
    }
    write_svg_line_plot((out / "calibration_sweep.svg").string(), "success and distortion vs calibration rate", xs,
                        {{"success_rate", success}, {"mean_l2", l2}});
    std::cout << sweep_table_tsv(rows);
    return 0;
}

int cmd_sweep_kappa(const Common& c) {
    RunConfig cfg = load_config(c);
    ScenarioPlan plan = cfg.to_plan();
    const fs::path out = prepare_out(cfg);
    const auto kappas = cfg.get_list("sweep", "kappas");
    ScenarioContext ctx = prepare_scenario(plan);
    const auto rows = kappa_sweep(ctx, kappas);
    std::ofstream table(out / "kappa_sweep.tsv");
    table << kappa_sweep_tsv(rows);
    std::vector<double> xs, success, l2;
    for (const auto& r : rows) {
        xs.push_back(r.kappa);
        success.push_back(r.success_rate);
        l2.push_back(r.mean_l2);
    }
    write_svg_line_plot((out / "kappa_sweep.svg").string(), "success and distortion vs kappa", xs,
                        {{"success_rate", success}, {"mean_l2", l2}});
    std::cout << kappa_sweep_tsv(rows);
    return 0;
}

int wait_for_interrupt(ServiceHandle& service, const std::string& what) {
    std::signal(SIGINT, on_interrupt);
    std::signal(SIGTERM, on_interrupt);
    std::cout << what << " listening on 127.0.0.1:" << service.port() << "\n" << std::flush;
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service.stop();
    return 0;
}

int cmd_serve_encoder(const Common& c, const std::string& checkpoint, int port) {
    RunConfig cfg = load_config(c);
    ScenarioPlan plan = cfg.to_plan();
    if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
    ServiceHandle service = serve_encoder(load_encoder(checkpoint), port, plan.seeds.session);
    return wait_for_interrupt(service, "encoder service");
}

int cmd_serve_classifier(const Common& c, const std::string& checkpoint, int port) {
    load_config(c);
    if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
    ServiceHandle service = serve_classifier(load_classifier(checkpoint), port);
    return wait_for_interrupt(service, "classifier service");
}

std::pair<std::string, int> split_endpoint(const std::string& endpoint) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string::npos) throw ConfigError("endpoint '" + endpoint + "' is not host:port");
    return {endpoint.substr(0, colon), std::stoi(endpoint.substr(colon + 1))};
}

int cmd_proxy(const Common& c, const std::string& encoder_ep, const std::string& classifier_ep,
              const std::string& decoder_arg, int port) {
    RunConfig cfg = load_config(c);
    PipelineTopology topo;
    std::tie(topo.encoder_host, topo.encoder_port) = split_endpoint(encoder_ep);
    std::tie(topo.classifier_host, topo.classifier_port) = split_endpoint(classifier_ep);
    if (decoder_arg == "benign") {
        const std::string benign = cfg.get("service", "benign_decoder");
        if (benign.empty()) throw ConfigError("--decoder benign needs service.benign_decoder in the config");
        topo.decoder_stage = "benign";
        topo.decoder = load_decoder(benign);
    } else {
        topo.decoder_stage = "mvd";
        topo.decoder = load_decoder(decoder_arg);
    }
    ServiceHandle service = mitm_proxy(std::move(topo), port);
    return wait_for_interrupt(service, "mitm proxy (" + decoder_arg + " stage)");
}

int cmd_pipeline_demo(const Common& c, std::string run_dir, long n, std::string out_path) {
    RunConfig cfg = load_config(c);
    ScenarioPlan plan = cfg.to_plan();
    const fs::path out = prepare_out(cfg);
    if (run_dir.empty()) run_dir = out.string();
    if (n <= 0) n = cfg.get_long("service", "demo_n");
    if (out_path.empty()) out_path = (out / "pipeline_transcript.tsv").string();

    Dataset subset = read_cache((fs::path(run_dir) / "eval_subset.mvdd").string(), Split::eval);
    if (n < subset.size()) {
        std::vector<long> idx;
        for (long i = 0; i < n; ++i) idx.push_back(i);
        subset = subset.subset(idx, Split::eval);
    }
    uint64_t session_seed = plan.seeds.eval;
    {
        std::ifstream meta(fs::path(run_dir) / "eval_subset_meta.json");
        if (meta) {
            json j = json::parse(meta, nullptr, false);
            if (!j.is_discarded() && j.contains("seed")) session_seed = j["seed"].get<uint64_t>();
        }
    }

    ServiceHandle enc_service =
        serve_encoder(load_encoder((fs::path(run_dir) / "deployment_encoder.mvdm").string()), 0, session_seed);
    ServiceHandle cls_service =
        serve_classifier(load_classifier((fs::path(run_dir) / "victim_classifier.mvdm").string()), 0);

    PipelineTranscript t = run_pipeline_demo(
        "127.0.0.1", enc_service.port(), "127.0.0.1", cls_service.port(),
        load_decoder((fs::path(run_dir) / "benign_decoder.mvdm").string()),
        load_decoder((fs::path(run_dir) / "mvd_decoder.mvdm").string()), subset, out_path);
    enc_service.stop();
    cls_service.stop();
    std::cout << "flip rate: " << t.flip_rate << " over " << t.rows.size() << " examples\n";
    return 0;
}

int cmd_report(const Common& c, std::string in_path) {
    RunConfig cfg = load_config(c);
    const fs::path out = prepare_out(cfg);
    if (in_path.empty()) in_path = (out / "reports" / "report.json").string();
    std::ifstream f(in_path);
    if (!f) throw ConfigError("cannot open report record " + in_path);
    json all = json::parse(f, nullptr, false);
    if (all.is_discarded()) throw ConfigError("malformed report record " + in_path);

    std::vector<std::string> names;
    std::vector<double> rates;
    std::ostringstream table;
    table << "attack\tthreat_model\tsuccess_rate\tmacro_f1\tl2_recon_mean\n";
    for (const auto& r : all) {
        names.push_back(r.value("attack", "?") + "/" + r.value("threat_model", "?"));
        rates.push_back(r.value("success_rate", 0.0));
        table << r.value("attack", "?") << "\t" << r.value("threat_model", "?") << "\t" << r.value("success_rate", 0.0)
              << "\t" << r["macro"].value("f1", 0.0) << "\t" << r["l2_vs_reconstruction"].value("mean", 0.0) << "\n";
    }
    std::ofstream ts(out / "summary.tsv");
    ts << table.str();
    if (!names.empty()) write_svg_bar_plot((out / "summary.svg").string(), "attack success rates", names, rates);
    std::cout << table.str();
    return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
    CLI::App app{"Malicious Variational Decoder laboratory"};
    app.require_subcommand(1);

    Common c;
    std::string role = "victim";
    std::string encoder_ckpt, classifier_ckpt, decoder_ckpt, checkpoint;
    std::string encoder_ep, classifier_ep, decoder_arg, run_dir, in_path, demo_out;
    int port = 0;
    long demo_n = 0;

    auto* tc = app.add_subcommand("train-classifier", "train a victim or shadow classifier");
    add_common(tc, c);
    tc->add_option("--role", role, "victim | shadow")->check(CLI::IsMember({"victim", "shadow"}));

    auto* tv = app.add_subcommand("train-vae", "Phase 1: train the attacker VAE");
    add_common(tv, c);

    auto* cal = app.add_subcommand("calibrate", "calibrate the decoder to a black-box encoder checkpoint");
    add_common(cal, c);
    cal->add_option("--encoder", encoder_ckpt, "encoder checkpoint to query");
    cal->add_option("--decoder", decoder_ckpt, "decoder checkpoint to calibrate");

    auto* tm = app.add_subcommand("train-mvd", "Phase 2: adversarial decoder training (white-box encoder path)");
    add_common(tm, c);
    tm->add_option("--encoder", encoder_ckpt, "white-box encoder checkpoint");
    tm->add_option("--classifier", classifier_ckpt, "attack classifier checkpoint");
    tm->add_option("--decoder", decoder_ckpt, "decoder checkpoint to train");

    auto* at = app.add_subcommand("attack", "full scenario: phases 1-3 plus evaluation");
    add_common(at, c);

    auto* ev = app.add_subcommand("evaluate", "Phase 3 evaluation of an existing decoder checkpoint");
    add_common(ev, c);
    ev->add_option("--decoder", decoder_ckpt, "decoder checkpoint to evaluate");

    auto* tmx = app.add_subcommand("targeted-matrix", "one targeted MVD per class with worst/average/best summary");
    add_common(tmx, c);

    auto* sc = app.add_subcommand("sweep-calibration", "calibration-rate sweep");
    add_common(sc, c);

    auto* sk = app.add_subcommand("sweep-kappa", "confidence-margin sweep");
    add_common(sk, c);

    auto* se = app.add_subcommand("serve-encoder", "run the encoder wire service");
    add_common(se, c);
    se->add_option("--checkpoint", checkpoint, "encoder checkpoint");
    se->add_option("--port", port, "listen port");

    auto* scl = app.add_subcommand("serve-classifier", "run the classifier wire service");
    add_common(scl, c);
    scl->add_option("--checkpoint", checkpoint, "classifier checkpoint");
    scl->add_option("--port", port, "listen port");

    auto* px = app.add_subcommand("proxy", "run the interception proxy");
    add_common(px, c);
    px->add_option("--encoder", encoder_ep, "encoder host:port")->required();
    px->add_option("--classifier", classifier_ep, "classifier host:port")->required();
    px->add_option("--decoder", decoder_arg, "decoder checkpoint path, or 'benign'")->required();
    px->add_option("--port", port, "listen port");

    auto* pd = app.add_subcommand("pipeline-demo", "stream the evaluation subset through benign and MVD stages");
    add_common(pd, c);
    pd->add_option("--run", run_dir, "attack run directory with saved checkpoints");
    pd->add_option("--n", demo_n, "number of examples");
    pd->add_option("--demo-out", demo_out, "transcript path");

    auto* rp = app.add_subcommand("report", "re-render tables and plots from stored report records");
    add_common(rp, c);
    rp->add_option("--in", in_path, "report.json produced by a previous run");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            app.exit(e);
            return 0;
        }
        app.exit(e);
        return 2;
    }

    try {
        if (tc->parsed()) return cmd_train_classifier(c, role);
        if (tv->parsed()) return cmd_train_vae(c);
        if (cal->parsed()) return cmd_calibrate(c, encoder_ckpt, decoder_ckpt);
        if (tm->parsed()) return cmd_train_mvd(c, encoder_ckpt, classifier_ckpt, decoder_ckpt);
        if (at->parsed()) return cmd_attack(c);
        if (ev->parsed()) return cmd_evaluate(c, decoder_ckpt);
        if (tmx->parsed()) return cmd_targeted_matrix(c);
        if (sc->parsed()) return cmd_sweep_calibration(c);
        if (sk->parsed()) return cmd_sweep_kappa(c);
        if (se->parsed()) return cmd_serve_encoder(c, checkpoint, port);
        if (scl->parsed()) return cmd_serve_classifier(c, checkpoint, port);
        if (px->parsed()) return cmd_proxy(c, encoder_ep, classifier_ep, decoder_arg, port);
        if (pd->parsed()) return cmd_pipeline_demo(c, run_dir, demo_n, demo_out);
        if (rp->parsed()) return cmd_report(c, in_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const PlanError& e) {
        std::cerr << "plan error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

int cli_main(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return cli_main(args);
}

}  // namespace mvd
