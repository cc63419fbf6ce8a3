#pragma once

#include <memory>
#include <optional>

#include "mvd/attack.hpp"
#include "mvd/evaluation.hpp"

namespace mvd {

enum class ThreatModel { double_white_box, double_black_box, black_box_classifier, black_box_encoder };

std::string threat_model_name(ThreatModel m);
ThreatModel parse_threat_model(const std::string& s);
bool encoder_is_black_box(ThreatModel m);
bool classifier_is_black_box(ThreatModel m);

/// Desk-scale training budgets. Caps of 0 mean "use everything".
struct TrainingSchedule {
    long cls_epochs = 3;
    double cls_lr = 1e-3;
    long cls_batch = 128;
    long victim_train_cap = 0;
    long attacker_train_cap = 0;
    long vae_iter = 1200;
    double vae_lr = 1e-3;
    long vae_batch = 128;
    long cal_iter = 400;
    double cal_lr = 1e-3;
    long cal_batch = 128;
};

struct ScenarioSeeds {
    uint64_t victim = 11;
    uint64_t shadow = 22;
    uint64_t attack = 33;
    uint64_t eval = 44;
    uint64_t session = 55;
};

struct ScenarioPlan {
    ThreatModel threat_model = ThreatModel::double_white_box;
    std::string dataset = "digits";
    std::string data_root = "data";
    std::string victim_classifier_preset = "classifier_mnist_victim";
    std::string shadow_classifier_preset;  // required iff the classifier is a black box
    std::string victim_encoder_preset;     // required iff the encoder is a black box
    std::string attacker_encoder_preset = "encoder_mnist_shadow";
    std::string decoder_preset = "mvd_mnist";
    AttackConfig attack;
    TrainingSchedule schedule;
    ScenarioSeeds seeds;
    long eval_subset_size = 1000;
    double calibration_rate = 1.0;

    void validate() const;
    std::string echo() const;  // flat key=value dump written next to outputs
};

/// Everything that exists before Phase 2: victim models, the attacker VAE,
/// optional shadow classifier, optional black-box victim VAE + calibration,
/// and the filtered evaluation subset.
struct ScenarioContext {
    ScenarioPlan plan;
    DatasetSplits data;
    Dataset victim_train;    // seed-shuffled victim-side slice of the train split
    Dataset attacker_train;  // disjoint-seed attacker-side slice
    ClassifierModel victim_classifier;
    double victim_classifier_accuracy = 0.0;
    std::optional<ClassifierModel> shadow_classifier;
    double shadow_classifier_accuracy = 0.0;
    EncoderModel attacker_encoder;
    DecoderModel phase1_decoder;                    // benign; calibrated when the encoder is black-box
    std::optional<DecoderModel> vae_only_decoder;   // pre-calibration copy (black-box settings)
    std::optional<EncoderModel> blackbox_encoder_model;
    std::optional<DecoderModel> blackbox_benign_decoder;
    std::unique_ptr<BlackBoxEncoder> oracle;
    std::optional<CalibrationSet> calibration;
    EvaluationSubset subset;

    EncoderModel& deployment_encoder();
    DecoderModel& benign_decoder();
    ClassifierModel& attack_classifier();  // shadow when the classifier is a black box
};

ScenarioContext prepare_scenario(const ScenarioPlan& plan);

/// Phase 2 on a fresh copy of the Phase-1 decoder, then Phase-3 evaluation
/// against the true victim on the filtered subset. The trained decoder is
/// handed back through out_decoder when requested.
AttackReport execute_attack(ScenarioContext& ctx, const AttackConfig& cfg, DecoderModel* out_decoder = nullptr,
                            AdversarialBatch* out_batch = nullptr);

AttackReport run_scenario(const ScenarioPlan& plan);

/// Trained on the attacker dataset's ground-truth labels (no distillation).
ClassifierModel train_shadow_classifier(const Dataset& data, const std::string& preset_name, uint64_t seed,
                                        const TrainingSchedule& schedule, const Dataset* test = nullptr,
                                        double* accuracy = nullptr);

struct TargetedMatrixResult {
    TargetedMatrixSummary summary;
    std::vector<AttackReport> reports;
};

/// One MVD per class; summary carries (worst, average, best).
TargetedMatrixResult targeted_matrix(ScenarioContext& ctx);

struct KappaSweepRow {
    double kappa = 0.0;
    double success_rate = 0.0;
    double mean_l2 = 0.0;
};

std::vector<KappaSweepRow> kappa_sweep(ScenarioContext& ctx, const std::vector<double>& kappas);
std::string kappa_sweep_tsv(const std::vector<KappaSweepRow>& rows);

/// Latents for the evaluation subset under the shared eps convention
/// (derive_eps(subset.seed, slot)), through the deployment encoder.
Tensor subset_latents(ScenarioContext& ctx);

}  // namespace mvd
