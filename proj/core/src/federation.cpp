#include "fedrlhf/federation.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <exception>
#include <nlohmann/json.hpp>
#include <numeric>
#include <optional>
#include <thread>

#include "fedrlhf/errors.hpp"
#include "fedrlhf/wire.hpp"

namespace fedrlhf {

AggregationStrategy AggregationStrategy::parse(const std::string& name) {
    if (name == "fedavg_uniform") return {AggregationKind::fedavg_uniform};
    if (name == "fedavg_weighted") return {AggregationKind::fedavg_weighted};
    if (name == "coordinate_median") return {AggregationKind::coordinate_median};
    throw ArgumentError("unknown aggregation strategy: " + name);
}

std::string AggregationStrategy::name() const {
    switch (kind) {
        case AggregationKind::fedavg_uniform: return "fedavg_uniform";
        case AggregationKind::fedavg_weighted: return "fedavg_weighted";
        case AggregationKind::coordinate_median: return "coordinate_median";
    }
    return "?";
}

ParameterVector aggregate(std::span<const ClientUpdate> updates, AggregationStrategy strategy) {
    if (updates.empty()) throw ArgumentError("aggregate: no updates");
    const std::size_t dim = updates[0].delta.dim();
    for (const auto& u : updates) {
        if (u.delta.dim() != dim) {
            throw ProtocolError("aggregate: update from client " + std::to_string(u.client_id) +
                                " has dimension " + std::to_string(u.delta.dim()) + ", expected " +
                                std::to_string(dim));
        }
    }
    // Canonical client-id order makes the arithmetic independent of arrival order.
    std::vector<std::size_t> order(updates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return updates[a].client_id < updates[b].client_id;
    });

    // Idempotence holds exactly: K identical deltas aggregate to that delta
    // under every strategy, with no averaging round-off.
    bool all_equal = true;
    for (std::size_t i = 1; i < updates.size() && all_equal; ++i) {
        all_equal = bitwise_equal(updates[i].delta, updates[0].delta);
    }
    if (all_equal) {
        ParameterVector out = updates[0].delta;
        out.ensure_finite("aggregate");
        return out;
    }

    switch (strategy.kind) {
        case AggregationKind::fedavg_uniform: {
            ParameterVector acc = updates[order[0]].delta;
            for (std::size_t i = 1; i < order.size(); ++i) acc += updates[order[i]].delta;
            acc *= 1.0 / static_cast<double>(updates.size());
            acc.ensure_finite("aggregate");
            return acc;
        }
        case AggregationKind::fedavg_weighted: {
            double total = 0.0;
            for (const auto& u : updates) {
                if (u.n_samples < 0) throw ArgumentError("aggregate: negative sample count");
                total += static_cast<double>(u.n_samples);
            }
            if (total <= 0.0) throw ArgumentError("aggregate: weighted FedAvg needs n_samples > 0");
            ParameterVector acc(dim);
            for (std::size_t i : order) {
                acc.axpy(static_cast<double>(updates[i].n_samples), updates[i].delta);
            }
            acc *= 1.0 / total;
            acc.ensure_finite("aggregate");
            return acc;
        }
        case AggregationKind::coordinate_median: {
            ParameterVector acc(dim);
            std::vector<double> column(updates.size());
            for (std::size_t j = 0; j < dim; ++j) {
                for (std::size_t i = 0; i < order.size(); ++i) {
                    column[i] = updates[order[i]].delta[j];
                }
                const std::size_t n = column.size();
                std::nth_element(column.begin(), column.begin() + n / 2, column.end());
                double med = column[n / 2];
                if (n % 2 == 0) {
                    const double lower =
                        *std::max_element(column.begin(), column.begin() + n / 2);
                    med = 0.5 * (lower + med);
                }
                acc[j] = med;
            }
            acc.ensure_finite("aggregate");
            return acc;
        }
    }
    throw ArgumentError("aggregate: unknown strategy");
}

std::string round_record_json_line(const RoundRecord& record, bool include_duration) {
    nlohmann::json j;
    j["round"] = record.round;
    j["theta_norm_before"] = record.theta_before.norm();
    j["theta_norm_after"] = record.theta_after.norm();
    auto& ups = j["updates"] = nlohmann::json::array();
    for (const auto& u : record.updates) {
        ups.push_back({{"client", u.client_id},
                       {"n_samples", u.n_samples},
                       {"update_norm", u.update_norm}});
    }
    if (include_duration) j["duration_seconds"] = record.duration_seconds;
    return j.dump();
}

LocalLearnerHandle::LocalLearnerHandle(int client_id, const EnvironmentSpec& env,
                                       std::shared_ptr<FeedbackSource> feedback, LocalConfig cfg,
                                       RngStream rng_base)
    : client_id_(client_id),
      env_(&env),
      feedback_(std::move(feedback)),
      cfg_(std::move(cfg)),
      rng_base_(rng_base) {
    cfg_.validate();
    if (!feedback_) throw ArgumentError("LocalLearnerHandle: null feedback source");
}

LocalLearnerHandle::LocalLearnerHandle(int client_id, std::shared_ptr<GradientSource> source,
                                       LocalConfig cfg, RngStream rng_base)
    : client_id_(client_id), source_(std::move(source)), cfg_(std::move(cfg)), rng_base_(rng_base) {
    cfg_.validate();
    if (!source_) throw ArgumentError("LocalLearnerHandle: null gradient source");
}

ClientUpdate LocalLearnerHandle::run_round(int round, const ParameterVector& theta) {
    RngStream rng = rng_base_.substream(static_cast<std::uint64_t>(round));
    ClientUpdate update;
    if (source_) {
        update = local_rlhf_epoch(theta, *source_, cfg_, rng, client_id_, round);
    } else if (cfg_.learner_kind == LearnerKind::q_learning) {
        const QTable table = QTable::from_parameters(theta, env_->n_states(), env_->n_actions());
        auto [q_after, up] = q_learning_epoch(table, *env_, *feedback_, cfg_, rng, client_id_, round);
        update = std::move(up);
    } else {
        ReinforceGradientSource src(*env_, *feedback_, cfg_);
        update = local_rlhf_epoch(theta, src, cfg_, rng, client_id_, round);
    }
    last_local_theta_ = theta + update.delta;
    return update;
}

namespace {

std::vector<ClientUpdate> collect_round_updates(std::span<ClientHandle* const> clients, int round,
                                                const ParameterVector& theta, bool parallel) {
    std::vector<ClientUpdate> updates(clients.size());
    if (!parallel || clients.size() == 1) {
        for (std::size_t i = 0; i < clients.size(); ++i) {
            updates[i] = clients[i]->run_round(round, theta);
        }
        return updates;
    }
    std::vector<std::exception_ptr> failures(clients.size());
    std::vector<std::thread> workers;
    workers.reserve(clients.size());
    for (std::size_t i = 0; i < clients.size(); ++i) {
        workers.emplace_back([&, i] {
            try {
                updates[i] = clients[i]->run_round(round, theta);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (std::size_t i = 0; i < failures.size(); ++i) {
        if (failures[i]) {
            try {
                std::rethrow_exception(failures[i]);
            } catch (const std::exception& e) {
                throw ProtocolError("round " + std::to_string(round) + " aborted: client " +
                                    std::to_string(clients[i]->client_id()) +
                                    " failed: " + e.what());
            }
        }
    }
    return updates;
}

}  // namespace

FederationResult run_federation(const ParameterVector& init,
                                std::span<ClientHandle* const> clients, int rounds,
                                AggregationStrategy strategy, bool parallel_clients,
                                const std::function<void(const RoundRecord&)>& on_round) {
    if (clients.empty()) throw ArgumentError("run_federation: need at least one client");
    if (rounds < 1) throw ArgumentError("run_federation: need at least one round");
    init.ensure_finite("run_federation: init");

    FederationResult result;
    result.rounds.reserve(static_cast<std::size_t>(rounds));
    ParameterVector theta = init;
    ParameterVector theta_sum(init.dim());

    for (int t = 0; t < rounds; ++t) {
        const auto started = std::chrono::steady_clock::now();
        RoundRecord record;
        record.round = t;
        record.theta_before = theta;
        theta_sum += theta;

        std::vector<ClientUpdate> updates =
            collect_round_updates(clients, t, theta, parallel_clients);
        const ParameterVector delta = aggregate(updates, strategy);
        theta += delta;
        theta.ensure_finite("run_federation: aggregated parameters");

        record.theta_after = theta;
        for (const auto& u : updates) {
            record.updates.push_back({u.client_id, u.n_samples, u.delta.norm()});
        }
        std::sort(record.updates.begin(), record.updates.end(),
                  [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
        record.duration_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        if (on_round) on_round(record);
        result.rounds.push_back(std::move(record));
    }

    result.theta_final = theta;
    result.theta_avg = theta_sum;
    result.theta_avg *= 1.0 / static_cast<double>(rounds);
    return result;
}

// ---------------------------------------------------------------------------
// Socket transport
// ---------------------------------------------------------------------------

namespace {

void close_fd(int& fd) {
    if (fd >= 0) {
        ::close(fd);
        fd = -1;
    }
}

void write_all(int fd, const std::uint8_t* data, std::size_t len, const char* who) {
    std::size_t sent = 0;
    while (sent < len) {
        const ssize_t n = ::send(fd, data + sent, len - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string(who) + ": send failed: " + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
}

/// Reads exactly len bytes. Returns false on clean EOF at offset 0.
bool read_all(int fd, std::uint8_t* data, std::size_t len, const char* who) {
    std::size_t got = 0;
    while (got < len) {
        const ssize_t n = ::recv(fd, data + got, len - got, 0);
        if (n == 0) {
            if (got == 0) return false;
            throw ProtocolError(std::string(who) + ": connection closed mid-frame");
        }
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string(who) + ": recv failed: " + std::strerror(errno));
        }
        got += static_cast<std::size_t>(n);
    }
    return true;
}

void send_message(int fd, const WireMessage& msg, const char* who) {
    const std::vector<std::uint8_t> frame = encode_frame(msg);
    write_all(fd, frame.data(), frame.size(), who);
}

/// Receives one frame; std::nullopt on clean EOF between frames.
std::optional<WireMessage> recv_message(int fd, const char* who) {
    std::uint8_t header[kFrameHeaderSize];
    if (!read_all(fd, header, sizeof(header), who)) return std::nullopt;
    const FrameHeader h = decode_header(std::span<const std::uint8_t>(header, sizeof(header)));
    std::vector<std::uint8_t> payload(h.payload_len);
    if (h.payload_len > 0 && !read_all(fd, payload.data(), payload.size(), who)) {
        throw ProtocolError(std::string(who) + ": connection closed mid-frame");
    }
    return decode_payload(h.msg_type, payload);
}

struct ClientSession {
    int fd = -1;
    int client_id = -1;
};

}  // namespace

SocketServer::SocketServer(const std::string& bind_address, std::uint16_t port, int n_clients)
    : n_clients_(n_clients) {
    if (n_clients < 1) throw ArgumentError("SocketServer: need at least one client");
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw ProtocolError("server: socket() failed");
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
        close_fd(listen_fd_);
        throw ArgumentError("server: invalid bind address " + bind_address);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        const std::string err = std::strerror(errno);
        close_fd(listen_fd_);
        throw ProtocolError("server: bind failed: " + err);
    }
    if (::listen(listen_fd_, n_clients) != 0) {
        const std::string err = std::strerror(errno);
        close_fd(listen_fd_);
        throw ProtocolError("server: listen failed: " + err);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
}

SocketServer::~SocketServer() { close_fd(listen_fd_); }

FederationResult SocketServer::run(const ParameterVector& init, int rounds,
                                   AggregationStrategy strategy) {
    if (rounds < 1) throw ArgumentError("server: need at least one round");
    init.ensure_finite("server: init");

    std::vector<ClientSession> sessions;
    sessions.reserve(static_cast<std::size_t>(n_clients_));
    auto close_all = [&sessions] {
        for (auto& s : sessions) close_fd(s.fd);
    };

    try {
        for (int i = 0; i < n_clients_; ++i) {
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) throw ProtocolError("server: accept failed");
            const int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            auto msg = recv_message(fd, "server");
            if (!msg || !std::holds_alternative<Hello>(*msg)) {
                ::close(fd);
                throw ProtocolError("server: expected Hello as first frame");
            }
            sessions.push_back({fd, static_cast<int>(std::get<Hello>(*msg).client_id)});
        }
        std::sort(sessions.begin(), sessions.end(),
                  [](const ClientSession& a, const ClientSession& b) {
                      return a.client_id < b.client_id;
                  });

        FederationResult result;
        result.rounds.reserve(static_cast<std::size_t>(rounds));
        ParameterVector theta = init;
        ParameterVector theta_sum(init.dim());

        for (int t = 0; t < rounds; ++t) {
            const auto started = std::chrono::steady_clock::now();
            RoundRecord record;
            record.round = t;
            record.theta_before = theta;
            theta_sum += theta;

            const WireMessage broadcast = RoundBroadcast{static_cast<std::uint32_t>(t), theta};
            for (const auto& s : sessions) send_message(s.fd, broadcast, "server");

            std::vector<ClientUpdate> updates;
            updates.reserve(sessions.size());
            for (const auto& s : sessions) {
                auto msg = recv_message(s.fd, "server");
                if (!msg) {
                    throw ProtocolError("server: client " + std::to_string(s.client_id) +
                                        " disconnected during round " + std::to_string(t) +
                                        "; round aborted");
                }
                if (!std::holds_alternative<ClientUpdate>(*msg)) {
                    throw ProtocolError("server: unexpected frame from client " +
                                        std::to_string(s.client_id) + " during round " +
                                        std::to_string(t));
                }
                ClientUpdate u = std::get<ClientUpdate>(std::move(*msg));
                if (u.round != t) {
                    throw ProtocolError("server: client " + std::to_string(s.client_id) +
                                        " replied for round " + std::to_string(u.round) +
                                        " during round " + std::to_string(t));
                }
                updates.push_back(std::move(u));
            }

            const ParameterVector delta = aggregate(updates, strategy);
            theta += delta;
            theta.ensure_finite("server: aggregated parameters");

            record.theta_after = theta;
            for (const auto& u : updates) {
                record.updates.push_back({u.client_id, u.n_samples, u.delta.norm()});
            }
            std::sort(record.updates.begin(), record.updates.end(),
                      [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
            record.duration_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            result.rounds.push_back(std::move(record));
        }

        for (const auto& s : sessions) send_message(s.fd, Shutdown{}, "server");
        close_all();

        result.theta_final = theta;
        result.theta_avg = theta_sum;
        result.theta_avg *= 1.0 / static_cast<double>(rounds);
        return result;
    } catch (...) {
        close_all();
        throw;
    }
}

void run_socket_client(const std::string& host, std::uint16_t port, ClientHandle& handle) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ProtocolError("client: socket() failed");

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    const std::string resolved = host == "localhost" ? "127.0.0.1" : host;
    if (::inet_pton(AF_INET, resolved.c_str(), &addr.sin_addr) != 1) {
        close_fd(fd);
        throw ArgumentError("client: invalid address " + host);
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        const std::string err = std::strerror(errno);
        close_fd(fd);
        throw ProtocolError("client: connect failed: " + err);
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));

    try {
        send_message(fd, Hello{static_cast<std::uint32_t>(handle.client_id())}, "client");
        for (;;) {
            auto msg = recv_message(fd, "client");
            if (!msg) throw ProtocolError("client: server closed connection without Shutdown");
            if (std::holds_alternative<Shutdown>(*msg)) break;
            if (!std::holds_alternative<RoundBroadcast>(*msg)) {
                throw ProtocolError("client: unexpected frame from server");
            }
            const auto& b = std::get<RoundBroadcast>(*msg);
            ClientUpdate update = handle.run_round(static_cast<int>(b.round), b.params);
            send_message(fd, WireMessage(std::move(update)), "client");
        }
        close_fd(fd);
    } catch (...) {
        close_fd(fd);
        throw;
    }
}

}  // namespace fedrlhf
