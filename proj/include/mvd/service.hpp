#pragma once

#include <atomic>
#include <memory>
#include <thread>

#include "mvd/dataset.hpp"
#include "mvd/model.hpp"
#include "mvd/wire.hpp"

namespace mvd {

/// A running wire service: one listener thread, one connection at a time,
/// requests handled strictly in order. stop() (or destruction) shuts it down.
class ServiceHandle {
public:
    ServiceHandle() = default;
    ServiceHandle(ServiceHandle&&) = default;
    ServiceHandle& operator=(ServiceHandle&&) = default;
    ~ServiceHandle();

    int port() const;
    void stop();
    std::vector<std::string> request_log() const;

    struct State;
    explicit ServiceHandle(std::shared_ptr<State> state) : state_(std::move(state)) {}

private:
    std::shared_ptr<State> state_;
};

/// Replies to TENSOR (N,H,W,C) requests with a latent TENSOR (N, D); one
/// sampled z per row, eps = derive_eps(session_seed, running request id).
ServiceHandle serve_encoder(EncoderModel model, int port, uint64_t session_seed);

/// Replies to single-example TENSOR requests with a LABEL frame.
ServiceHandle serve_classifier(ClassifierModel model, int port);

struct PipelineTopology {
    std::string encoder_host = "127.0.0.1";
    int encoder_port = 0;
    std::string classifier_host = "127.0.0.1";
    int classifier_port = 0;
    std::string decoder_stage = "benign";  // "benign" | "mvd"; exactly one active
    DecoderModel decoder;                  // the active stage's decoder
};

/// Forwards client image -> encoder; decodes the latent with the active
/// decoder stage; forwards the decoded image -> classifier; returns the LABEL.
ServiceHandle mitm_proxy(PipelineTopology topology, int port);

/// Simple blocking client for the frame protocol.
class WireClient {
public:
    WireClient(const std::string& host, int port);
    ~WireClient();
    WireClient(const WireClient&) = delete;
    WireClient& operator=(const WireClient&) = delete;

    WireFrame call(const WireFrame& request);

private:
    int fd_ = -1;
};

struct PipelineTranscript {
    struct Row {
        long index;
        int true_label;
        int benign_label;
        int attacked_label;
    };
    std::vector<Row> rows;
    double flip_rate = 0.0;  // attacked != benign

    std::string to_tsv() const;
};

/// Streams every subset example through a benign-stage proxy and then an
/// MVD-stage proxy (one stage active at a time), against the same upstream
/// encoder/classifier services. Writes the transcript to out_path.
PipelineTranscript run_pipeline_demo(const std::string& encoder_host, int encoder_port, const std::string& classifier_host,
                                     int classifier_port, DecoderModel benign, DecoderModel mvd, const Dataset& subset,
                                     const std::string& out_path);

}  // namespace mvd
