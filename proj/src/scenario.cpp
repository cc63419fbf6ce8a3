#include "mvd/scenario.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "mvd/vae.hpp"

namespace mvd {

std::string threat_model_name(ThreatModel m) {
    switch (m) {
        case ThreatModel::double_white_box: return "double_white_box";
        case ThreatModel::double_black_box: return "double_black_box";
        case ThreatModel::black_box_classifier: return "black_box_classifier";
        case ThreatModel::black_box_encoder: return "black_box_encoder";
    }
    return "?";
}

ThreatModel parse_threat_model(const std::string& s) {
    if (s == "double_white_box") return ThreatModel::double_white_box;
    if (s == "double_black_box") return ThreatModel::double_black_box;
    if (s == "black_box_classifier") return ThreatModel::black_box_classifier;
    if (s == "black_box_encoder") return ThreatModel::black_box_encoder;
    throw InvalidArgument("unknown threat model '" + s + "'");
}

bool encoder_is_black_box(ThreatModel m) {
    return m == ThreatModel::double_black_box || m == ThreatModel::black_box_encoder;
}
bool classifier_is_black_box(ThreatModel m) {
    return m == ThreatModel::double_black_box || m == ThreatModel::black_box_classifier;
}

void ScenarioPlan::validate() const {
    attack.validate();
    if (classifier_is_black_box(threat_model) && shadow_classifier_preset.empty())
        throw PlanError("threat model " + threat_model_name(threat_model) + " needs a shadow classifier preset");
    if (!classifier_is_black_box(threat_model) && !shadow_classifier_preset.empty())
        throw PlanError("shadow classifier preset given but the classifier is a white box");
    if (encoder_is_black_box(threat_model) && victim_encoder_preset.empty())
        throw PlanError("threat model " + threat_model_name(threat_model) + " needs a victim encoder preset");
    if (!encoder_is_black_box(threat_model) && !victim_encoder_preset.empty())
        throw PlanError("victim encoder preset given but the encoder is a white box");
    if (attacker_encoder_preset.empty() || decoder_preset.empty() || victim_classifier_preset.empty())
        throw PlanError("plan lacks a required preset");
    if (eval_subset_size < 1) throw PlanError("evaluation subset size must be >= 1");
    if (!(calibration_rate > 0.0 && calibration_rate <= 1.0)) throw PlanError("calibration rate must be in (0,1]");
}

std::string ScenarioPlan::echo() const {
    std::ostringstream os;
    os << "threat_model=" << threat_model_name(threat_model) << "\n";
    os << "dataset=" << dataset << "\n";
    os << "victim_classifier=" << victim_classifier_preset << "\n";
    os << "shadow_classifier=" << shadow_classifier_preset << "\n";
    os << "victim_encoder=" << victim_encoder_preset << "\n";
    os << "attacker_encoder=" << attacker_encoder_preset << "\n";
    os << "decoder=" << decoder_preset << "\n";
    os << "balance=" << attack.balance << " confidence=" << attack.confidence;
    if (attack.target) os << " target=" << *attack.target;
    os << " adv_iter=" << attack.adv_iter << " lr=" << attack.lr << " batch=" << attack.batch << "\n";
    os << "seeds=" << seeds.victim << "," << seeds.shadow << "," << seeds.attack << "," << seeds.eval << ","
       << seeds.session << "\n";
    os << "eval_subset=" << eval_subset_size << " calibration_rate=" << calibration_rate << "\n";
    return os.str();
}

namespace {

Dataset shuffled_slice(const Dataset& d, uint64_t seed, long cap) {
    std::vector<long> idx(static_cast<size_t>(d.size()));
    for (long i = 0; i < d.size(); ++i) idx[static_cast<size_t>(i)] = i;
    Rng rng(seed ^ 0x51cedULL);
    rng.shuffle(idx);
    if (cap > 0 && cap < d.size()) idx.resize(static_cast<size_t>(cap));
    return d.subset(idx, d.split());
}

}  // namespace

ClassifierModel train_shadow_classifier(const Dataset& data, const std::string& preset_name, uint64_t seed,
                                        const TrainingSchedule& schedule, const Dataset* test, double* accuracy) {
    if (data.size() == 0) throw InvalidArgument("attacker dataset is empty");
    ClassifierModel model = build_classifier(preset(preset_name), seed);
    const auto report =
        train_classifier(model, data, test, schedule.cls_epochs, schedule.cls_lr, schedule.cls_batch, seed);
    if (accuracy) *accuracy = report.final_test_accuracy;
    return model;
}

EncoderModel& ScenarioContext::deployment_encoder() {
    return blackbox_encoder_model ? *blackbox_encoder_model : attacker_encoder;
}
DecoderModel& ScenarioContext::benign_decoder() {
    return blackbox_benign_decoder ? *blackbox_benign_decoder : phase1_decoder;
}
ClassifierModel& ScenarioContext::attack_classifier() {
    return shadow_classifier ? *shadow_classifier : victim_classifier;
}

ScenarioContext prepare_scenario(const ScenarioPlan& plan) {
    plan.validate();
    ScenarioContext ctx;
    ctx.plan = plan;
    ctx.data = load_dataset(plan.dataset, plan.data_root);

    ctx.victim_train = shuffled_slice(ctx.data.train, plan.seeds.victim, plan.schedule.victim_train_cap);
    ctx.attacker_train = shuffled_slice(ctx.data.train, plan.seeds.attack, plan.schedule.attacker_train_cap);

    // Victim classifier.
    ctx.victim_classifier = build_classifier(preset(plan.victim_classifier_preset), plan.seeds.victim);
    ctx.victim_classifier_accuracy = train_classifier(ctx.victim_classifier, ctx.victim_train, &ctx.data.test,
                                                      plan.schedule.cls_epochs, plan.schedule.cls_lr,
                                                      plan.schedule.cls_batch, plan.seeds.victim)
                                         .final_test_accuracy;

    // Attacker VAE (Algorithm Phase 1).
    ctx.attacker_encoder = build_encoder(preset(plan.attacker_encoder_preset), plan.seeds.attack);
    ctx.phase1_decoder = build_decoder(preset(plan.decoder_preset), plan.seeds.attack + 1);
    train_vae(ctx.attacker_encoder, ctx.phase1_decoder, ctx.attacker_train, plan.schedule.vae_iter, plan.schedule.vae_lr,
              plan.schedule.vae_batch, plan.seeds.attack);

    if (classifier_is_black_box(plan.threat_model)) {
        double acc = 0.0;
        ctx.shadow_classifier = train_shadow_classifier(ctx.attacker_train, plan.shadow_classifier_preset,
                                                        plan.seeds.shadow, plan.schedule, &ctx.data.test, &acc);
        ctx.shadow_classifier_accuracy = acc;
    }

    if (encoder_is_black_box(plan.threat_model)) {
        // The separately trained victim VAE whose encoder the attacker can
        // only query.
        EncoderModel enc_b = build_encoder(preset(plan.victim_encoder_preset), plan.seeds.victim + 7);
        DecoderModel dec_b = build_decoder(preset(plan.decoder_preset), plan.seeds.victim + 8);
        train_vae(enc_b, dec_b, ctx.victim_train, plan.schedule.vae_iter, plan.schedule.vae_lr, plan.schedule.vae_batch,
                  plan.seeds.victim + 9);
        ctx.vae_only_decoder = ctx.phase1_decoder.clone();
        ctx.oracle = std::make_unique<BlackBoxEncoder>(enc_b.clone(), plan.seeds.session);
        ctx.blackbox_encoder_model = std::move(enc_b);
        ctx.blackbox_benign_decoder = std::move(dec_b);

        Dataset cal_data = plan.calibration_rate >= 1.0
                               ? ctx.attacker_train
                               : stratified_sample(ctx.attacker_train, plan.calibration_rate, plan.seeds.attack + 5);
        ctx.calibration = query_encoder(*ctx.oracle, cal_data, plan.victim_encoder_preset);
        calibrate_decoder(ctx.phase1_decoder, *ctx.calibration, plan.schedule.cal_iter, plan.schedule.cal_lr,
                          plan.schedule.cal_batch, plan.seeds.attack + 6);
    }

    ctx.subset = select_evaluation_subset(ctx.data.test, ctx.victim_classifier, ctx.deployment_encoder(),
                                          ctx.benign_decoder(), plan.eval_subset_size, plan.seeds.eval);
    return ctx;
}

Tensor subset_latents(ScenarioContext& ctx) {
    EncoderModel& enc = ctx.deployment_encoder();
    const long n = ctx.subset.data.size();
    GaussianPosterior post = enc.encode(ctx.subset.data.features());
    Tensor eps({n, enc.latent_dim()});
    for (long k = 0; k < n; ++k) {
        Tensor e = derive_eps(ctx.subset.seed, static_cast<uint64_t>(k), enc.latent_dim());
        std::memcpy(eps.row(k), e.data(), sizeof(float) * static_cast<size_t>(e.size()));
    }
    return reparameterize(post, eps);
}

AttackReport execute_attack(ScenarioContext& ctx, const AttackConfig& cfg, DecoderModel* out_decoder,
                            AdversarialBatch* out_batch) {
    DecoderModel decoder = ctx.phase1_decoder.clone();
    EncoderHandle handle = encoder_is_black_box(ctx.plan.threat_model)
                               ? EncoderHandle::black_box(&*ctx.calibration)
                               : EncoderHandle::white_box(&ctx.attacker_encoder, &ctx.attacker_train,
                                                          ctx.plan.seeds.attack + 13);
    train_mvd(decoder, handle, ctx.attack_classifier(), cfg);

    // Phase 3 against the true victim on the filtered subset, reusing the
    // subset's eps so the wire pipeline reproduces these labels exactly.
    Tensor z = subset_latents(ctx);
    AdversarialBatch batch = generate_from_latents(decoder, z, ctx.subset.data.features(), &ctx.benign_decoder());
    batch.clean_predictions = ctx.victim_classifier.predict(batch.reconstructions);
    batch.adversarial_predictions = ctx.victim_classifier.predict(batch.adversarials);

    const long n = ctx.subset.data.size();
    std::vector<int> labels(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) labels[static_cast<size_t>(i)] = ctx.subset.data.label_of(i);

    AttackReport report;
    report.threat_model = threat_model_name(ctx.plan.threat_model);
    report.attack_name = "mvd";
    report.dataset = ctx.plan.dataset;
    report.mode = cfg.targeted() ? SuccessMode::targeted : SuccessMode::non_targeted;
    report.target = cfg.target.value_or(-1);
    report.success_rate = attack_success_rate(batch.adversarial_predictions, labels, report.mode, report.target);
    report.evaluated = n;
    if (report.mode == SuccessMode::targeted) {
        long considered = 0, hits = 0;
        for (long i = 0; i < n; ++i) {
            if (labels[static_cast<size_t>(i)] == report.target) continue;
            ++considered;
            if (batch.adversarial_predictions[static_cast<size_t>(i)] == report.target) ++hits;
        }
        report.evaluated = considered;
        report.successes = hits;
    } else {
        long hits = 0;
        for (long i = 0; i < n; ++i)
            if (batch.adversarial_predictions[static_cast<size_t>(i)] != labels[static_cast<size_t>(i)]) ++hits;
        report.successes = hits;
    }
    report.metrics = classification_metrics(batch.adversarial_predictions, labels, ctx.data.test.class_count());
    const auto [orig, recon] = distortion_stats(batch);
    report.l2_vs_original = orig;
    report.l2_vs_reconstruction = recon;

    // Amortized per-example generation time: encode + decode, no classifier.
    EncoderModel& enc = ctx.deployment_encoder();
    const Tensor& features = ctx.subset.data.features();
    report.per_example_seconds = runtime_benchmark(
        [&] {
            GaussianPosterior post = enc.encode(features);
            Tensor zz = post.mu;  // deployment draws use the posterior sample; mean is the same cost
            decoder.decode(zz);
        },
        n, 1);
    report.config_echo = ctx.plan.echo();
    report.seed = cfg.seed;

    if (out_decoder) *out_decoder = std::move(decoder);
    if (out_batch) *out_batch = std::move(batch);
    return report;
}

AttackReport run_scenario(const ScenarioPlan& plan) {
    ScenarioContext ctx = prepare_scenario(plan);
    return execute_attack(ctx, plan.attack);
}

TargetedMatrixResult targeted_matrix(ScenarioContext& ctx) {
    const long classes = ctx.data.test.class_count();
    TargetedMatrixResult result;
    for (long t = 0; t < classes; ++t) {
        AttackConfig cfg = ctx.plan.attack;
        cfg.target = static_cast<int>(t);
        cfg.seed = ctx.plan.attack.seed + static_cast<uint64_t>(t);
        AttackReport report = execute_attack(ctx, cfg);
        result.summary.per_target.push_back(report.success_rate);
        result.reports.push_back(std::move(report));
    }
    auto& v = result.summary.per_target;
    result.summary.summary.min = *std::min_element(v.begin(), v.end());
    result.summary.summary.max = *std::max_element(v.begin(), v.end());
    double acc = 0.0;
    for (double s : v) acc += s;
    result.summary.summary.mean = acc / static_cast<double>(v.size());
    return result;
}

std::vector<KappaSweepRow> kappa_sweep(ScenarioContext& ctx, const std::vector<double>& kappas) {
    for (double k : kappas)
        if (k < 0.0) throw InvalidArgument("kappa must be >= 0");
    std::vector<KappaSweepRow> rows;
    for (size_t i = 0; i < kappas.size(); ++i) {
        AttackConfig cfg = ctx.plan.attack;
        cfg.confidence = kappas[i];
        cfg.seed = ctx.plan.attack.seed + 100 + i;
        AttackReport report = execute_attack(ctx, cfg);
        rows.push_back({kappas[i], report.success_rate, report.l2_vs_reconstruction.mean});
    }
    return rows;
}

std::string kappa_sweep_tsv(const std::vector<KappaSweepRow>& rows) {
    std::ostringstream os;
    os << "kappa\tsuccess_rate\tmean_l2\n";
    for (const auto& r : rows) os << r.kappa << "\t" << r.success_rate << "\t" << r.mean_l2 << "\n";
    return os.str();
}

}  // namespace mvd
