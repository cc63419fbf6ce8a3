#include "mvd/service.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>

#include "mvd/vae.hpp"

namespace mvd {

struct ServiceHandle::State {
    int listen_fd = -1;
    int port = 0;
    std::atomic<bool> stop{false};
    std::thread worker;
    mutable std::mutex log_mutex;
    std::vector<std::string> log;

    void append_log(const std::string& line) {
        std::lock_guard<std::mutex> lock(log_mutex);
        log.push_back(line);
    }
};

ServiceHandle::~ServiceHandle() { stop(); }

int ServiceHandle::port() const { return state_ ? state_->port : 0; }

void ServiceHandle::stop() {
    if (!state_) return;
    state_->stop = true;
    if (state_->worker.joinable()) state_->worker.join();
    if (state_->listen_fd >= 0) {
        ::close(state_->listen_fd);
        state_->listen_fd = -1;
    }
}

std::vector<std::string> ServiceHandle::request_log() const {
    if (!state_) return {};
    std::lock_guard<std::mutex> lock(state_->log_mutex);
    return state_->log;
}

namespace {

int open_listener(int port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw BindError("cannot create socket");
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        throw BindError("cannot bind port " + std::to_string(port));
    }
    if (::listen(fd, 4) != 0) {
        ::close(fd);
        throw BindError("cannot listen on port " + std::to_string(port));
    }
    return fd;
}

int bound_port(int fd) {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
}

/// Accept loop shared by all services. The per-connection handler receives
/// each request frame and returns the reply; it may keep per-connection
/// state via the factory.
using RequestHandler = std::function<WireFrame(const WireFrame&)>;
using HandlerFactory = std::function<RequestHandler()>;

ServiceHandle start_service(int port, HandlerFactory make_handler) {
    auto state = std::make_shared<ServiceHandle::State>();
    state->listen_fd = open_listener(port);
    state->port = bound_port(state->listen_fd);

    auto run = [state, make_handler]() {
        while (!state->stop) {
            pollfd p{state->listen_fd, POLLIN, 0};
            const int r = ::poll(&p, 1, 100);
            if (r <= 0) continue;
            const int client = ::accept(state->listen_fd, nullptr, nullptr);
            if (client < 0) continue;
            RequestHandler handler = make_handler();
            while (!state->stop) {
                pollfd pc{client, POLLIN, 0};
                const int pr = ::poll(&pc, 1, 100);
                if (pr < 0) break;
                if (pr == 0) continue;
                std::optional<WireFrame> request;
                try {
                    request = read_frame(client);
                } catch (const Error& e) {
                    // Malformed frame: report and keep the connection.
                    try {
                        WireFrame err = WireFrame::error_frame(std::string(e.what()).substr(0, 0), e.what());
                        err.message = e.what();
                        write_frame(client, err);
                        continue;
                    } catch (...) {
                        break;
                    }
                }
                if (!request) break;  // clean EOF
                WireFrame reply;
                try {
                    reply = handler(*request);
                } catch (const Error& e) {
                    reply = WireFrame::error_frame("INTERNAL", e.what());
                }
                try {
                    write_frame(client, reply);
                } catch (...) {
                    break;
                }
            }
            ::close(client);
        }
    };
    state->worker = std::thread(run);
    return ServiceHandle(state);
}

}  // namespace

ServiceHandle serve_encoder(EncoderModel model, int port, uint64_t session_seed) {
    auto shared_model = std::make_shared<EncoderModel>(std::move(model));
    auto counter = std::make_shared<uint64_t>(0);
    return start_service(port, [shared_model, session_seed, counter]() -> RequestHandler {
        *counter = 0;  // request ids restart per connection
        return [shared_model, session_seed, counter](const WireFrame& req) -> WireFrame {
            if (req.kind != FrameKind::tensor) return WireFrame::error_frame("BAD_KIND", "encoder expects TENSOR frames");
            Tensor x;
            try {
                x = req.to_tensor();
            } catch (const Error& e) {
                return WireFrame::error_frame("BAD_PAYLOAD", e.what());
            }
            if (x.rank() < 2) return WireFrame::error_frame("BAD_SHAPE", "need a batched tensor");
            const long n = x.dim(0);
            GaussianPosterior post;
            try {
                post = shared_model->encode(x);
            } catch (const Error& e) {
                return WireFrame::error_frame("BAD_SHAPE", e.what());
            }
            const long d = shared_model->latent_dim();
            Tensor eps({n, d});
            for (long i = 0; i < n; ++i) {
                Tensor e = derive_eps(session_seed, (*counter)++, d);
                std::memcpy(eps.row(i), e.data(), sizeof(float) * static_cast<size_t>(d));
            }
            return WireFrame::from_tensor(reparameterize(post, eps));
        };
    });
}

ServiceHandle serve_classifier(ClassifierModel model, int port) {
    auto shared_model = std::make_shared<ClassifierModel>(std::move(model));
    return start_service(port, [shared_model]() -> RequestHandler {
        return [shared_model](const WireFrame& req) -> WireFrame {
            if (req.kind != FrameKind::tensor)
                return WireFrame::error_frame("BAD_KIND", "classifier expects TENSOR frames");
            Tensor x;
            try {
                x = req.to_tensor();
            } catch (const Error& e) {
                return WireFrame::error_frame("BAD_PAYLOAD", e.what());
            }
            if (x.rank() < 2 || x.dim(0) != 1)
                return WireFrame::error_frame("BAD_SHAPE", "classifier takes one example per request");
            try {
                const int pred = shared_model->predict(x)[0];
                return WireFrame::label_frame(static_cast<uint16_t>(pred));
            } catch (const Error& e) {
                return WireFrame::error_frame("BAD_SHAPE", e.what());
            }
        };
    });
}

WireClient::WireClient(const std::string& host, int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw IoError("cannot create socket");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd_);
        fd_ = -1;
        throw IoError("bad host " + host);
    }
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw IoError("cannot connect to " + host + ":" + std::to_string(port));
    }
}

WireClient::~WireClient() {
    if (fd_ >= 0) ::close(fd_);
}

WireFrame WireClient::call(const WireFrame& request) {
    write_frame(fd_, request);
    auto reply = read_frame(fd_);
    if (!reply) throw IoError("connection closed mid-call");
    return *reply;
}

ServiceHandle mitm_proxy(PipelineTopology topology, int port) {
    if (topology.decoder_stage != "benign" && topology.decoder_stage != "mvd")
        throw InvalidArgument("decoder stage must be 'benign' or 'mvd'");
    auto topo = std::make_shared<PipelineTopology>(std::move(topology));
    auto state_keeper = std::make_shared<ServiceHandle::State*>(nullptr);

    auto handle = start_service(port, [topo]() -> RequestHandler {
        // One upstream connection pair per client connection, opened lazily so
        // a dead upstream surfaces as UPSTREAM_DOWN rather than a crash.
        auto enc = std::make_shared<std::unique_ptr<WireClient>>();
        auto cls = std::make_shared<std::unique_ptr<WireClient>>();
        auto counter = std::make_shared<long>(0);
        return [topo, enc, cls, counter](const WireFrame& req) -> WireFrame {
            if (req.kind != FrameKind::tensor) return WireFrame::error_frame("BAD_KIND", "proxy expects TENSOR frames");
            try {
                if (!*enc) *enc = std::make_unique<WireClient>(topo->encoder_host, topo->encoder_port);
            } catch (const Error& e) {
                return WireFrame::error_frame("UPSTREAM_DOWN", std::string("encoder: ") + e.what());
            }
            WireFrame latent;
            try {
                latent = (*enc)->call(req);
            } catch (const Error& e) {
                enc->reset();
                return WireFrame::error_frame("UPSTREAM_DOWN", std::string("encoder: ") + e.what());
            }
            if (latent.kind != FrameKind::tensor) return latent;  // pass upstream errors through

            Tensor decoded;
            try {
                decoded = topo->decoder.decode(latent.to_tensor());
            } catch (const Error& e) {
                return WireFrame::error_frame("BAD_SHAPE", e.what());
            }
            try {
                if (!*cls) *cls = std::make_unique<WireClient>(topo->classifier_host, topo->classifier_port);
            } catch (const Error& e) {
                return WireFrame::error_frame("UPSTREAM_DOWN", std::string("classifier: ") + e.what());
            }
            WireFrame verdict;
            try {
                verdict = (*cls)->call(WireFrame::from_tensor(decoded));
            } catch (const Error& e) {
                cls->reset();
                return WireFrame::error_frame("UPSTREAM_DOWN", std::string("classifier: ") + e.what());
            }
            ++(*counter);
            return verdict;
        };
    });
    (void)state_keeper;
    return handle;
}

std::string PipelineTranscript::to_tsv() const {
    std::ostringstream os;
    os << "index\ttrue_label\tbenign_label\tattacked_label\n";
    for (const auto& r : rows) os << r.index << "\t" << r.true_label << "\t" << r.benign_label << "\t" << r.attacked_label << "\n";
    os << "# flip_rate\t" << flip_rate << "\n";
    return os.str();
}

namespace {

std::vector<int> stream_through_proxy(const std::string& host, int port, const Dataset& subset) {
    WireClient client(host, port);
    std::vector<int> labels;
    labels.reserve(static_cast<size_t>(subset.size()));
    for (long i = 0; i < subset.size(); ++i) {
        Tensor x({1, subset.shape()[0], subset.shape()[1], subset.shape()[2]});
        std::memcpy(x.data(), subset.features().row(i), sizeof(float) * static_cast<size_t>(subset.feature_size()));
        const WireFrame reply = client.call(WireFrame::from_tensor(x));
        if (reply.kind != FrameKind::label) throw Error("pipeline error at example " + std::to_string(i) + ": " + reply.message);
        labels.push_back(reply.label);
    }
    return labels;
}

}  // namespace

PipelineTranscript run_pipeline_demo(const std::string& encoder_host, int encoder_port, const std::string& classifier_host,
                                     int classifier_port, DecoderModel benign, DecoderModel mvd, const Dataset& subset,
                                     const std::string& out_path) {
    if (subset.size() == 0) throw InvalidArgument("empty demo subset");

    std::vector<int> benign_labels, attacked_labels;
    {
        PipelineTopology topo;
        topo.encoder_host = encoder_host;
        topo.encoder_port = encoder_port;
        topo.classifier_host = classifier_host;
        topo.classifier_port = classifier_port;
        topo.decoder_stage = "benign";
        topo.decoder = std::move(benign);
        ServiceHandle proxy = mitm_proxy(std::move(topo), 0);
        benign_labels = stream_through_proxy("127.0.0.1", proxy.port(), subset);
        proxy.stop();
    }
    {
        PipelineTopology topo;
        topo.encoder_host = encoder_host;
        topo.encoder_port = encoder_port;
        topo.classifier_host = classifier_host;
        topo.classifier_port = classifier_port;
        topo.decoder_stage = "mvd";
        topo.decoder = std::move(mvd);
        ServiceHandle proxy = mitm_proxy(std::move(topo), 0);
        attacked_labels = stream_through_proxy("127.0.0.1", proxy.port(), subset);
        proxy.stop();
    }

    PipelineTranscript t;
    long flips = 0;
    for (long i = 0; i < subset.size(); ++i) {
        PipelineTranscript::Row row{i, subset.label_of(i), benign_labels[static_cast<size_t>(i)],
                                    attacked_labels[static_cast<size_t>(i)]};
        if (row.attacked_label != row.benign_label) ++flips;
        t.rows.push_back(row);
    }
    t.flip_rate = static_cast<double>(flips) / static_cast<double>(subset.size());

    if (!out_path.empty()) {
        std::ofstream os(out_path);
        if (!os) throw IoError("cannot write transcript " + out_path);
        os << t.to_tsv();
    }
    return t;
}

}  // namespace mvd
