#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fedrlhf/local_learner.hpp"
#include "fedrlhf/parameter_vector.hpp"

namespace fedrlhf {

enum class AggregationKind { fedavg_uniform, fedavg_weighted, coordinate_median };

struct AggregationStrategy {
    AggregationKind kind = AggregationKind::fedavg_uniform;

    static AggregationStrategy parse(const std::string& name);
    std::string name() const;
};

/**
 * Combines the round's client updates into one aggregated delta:
 *  - fedavg_uniform:   arithmetic mean of the deltas;
 *  - fedavg_weighted:  sum n_k delta_k / sum n_k;
 *  - coordinate_median: per-coordinate median (mean of the middle pair for
 *    an even count).
 * Updates are processed in ascending client-id order regardless of input
 * order, so the result is bitwise independent of arrival order.
 */
ParameterVector aggregate(std::span<const ClientUpdate> updates, AggregationStrategy strategy);

struct RoundRecord {
    int round = 0;
    ParameterVector theta_before;
    ParameterVector theta_after;
    struct UpdateMeta {
        int client_id;
        std::int64_t n_samples;
        double update_norm;
    };
    std::vector<UpdateMeta> updates;
    double duration_seconds = 0.0;
};

/// One JSON object (single line, no trailing newline). Durations are only
/// included on request: harness outputs must be byte-reproducible, so they
/// keep timing in the sidecar log instead.
std::string round_record_json_line(const RoundRecord& record, bool include_duration);

struct FederationResult {
    ParameterVector theta_final;  // theta_T
    ParameterVector theta_avg;    // (1/T) sum_{t=0}^{T-1} theta_t
    std::vector<RoundRecord> rounds;
};

/// A client as the server sees it: given the broadcast parameters, produce
/// this round's update.
class ClientHandle {
public:
    virtual ~ClientHandle() = default;
    virtual int client_id() const = 0;
    virtual ClientUpdate run_round(int round, const ParameterVector& theta) = 0;
};

/**
 * Standard client: one local RLHF epoch per round over an environment and a
 * feedback source. Round t draws from rng_base.substream(t), so a handle is
 * reproducible from (seed, client id) alone and behaves identically under
 * the in-process and socket transports.
 */
class LocalLearnerHandle : public ClientHandle {
public:
    LocalLearnerHandle(int client_id, const EnvironmentSpec& env,
                       std::shared_ptr<FeedbackSource> feedback, LocalConfig cfg,
                       RngStream rng_base);

    /// Client backed by an arbitrary gradient source (quadratic family runs).
    LocalLearnerHandle(int client_id, std::shared_ptr<GradientSource> source, LocalConfig cfg,
                       RngStream rng_base);

    int client_id() const override { return client_id_; }
    ClientUpdate run_round(int round, const ParameterVector& theta) override;

    /// Personalized parameters after the most recent round
    /// (broadcast theta + this client's delta).
    const ParameterVector& last_local_theta() const { return last_local_theta_; }

private:
    int client_id_;
    const EnvironmentSpec* env_ = nullptr;
    std::shared_ptr<FeedbackSource> feedback_;
    std::shared_ptr<GradientSource> source_;
    LocalConfig cfg_;
    RngStream rng_base_;
    ParameterVector last_local_theta_;
};

/**
 * Synchronous in-process federation: T rounds of broadcast, parallel local
 * epochs, barrier, aggregate. A client failure aborts the whole round (no
 * partial aggregation). theta_avg averages theta_0 .. theta_{T-1}. An
 * optional observer fires after each completed round (evaluation hooks).
 */
FederationResult run_federation(const ParameterVector& init,
                                std::span<ClientHandle* const> clients, int rounds,
                                AggregationStrategy strategy, bool parallel_clients = true,
                                const std::function<void(const RoundRecord&)>& on_round = {});

/**
 * Socket transport. The server binds (port 0 picks an ephemeral port),
 * accepts `n_clients` sessions (each starting with Hello), then drives the
 * same synchronous round loop over length-prefixed frames and finishes with
 * Shutdown. Seeded identically, the theta_t sequence is bitwise equal to the
 * in-process transport's.
 */
class SocketServer {
public:
    SocketServer(const std::string& bind_address, std::uint16_t port, int n_clients);
    ~SocketServer();

    SocketServer(const SocketServer&) = delete;
    SocketServer& operator=(const SocketServer&) = delete;

    std::uint16_t port() const { return port_; }

    FederationResult run(const ParameterVector& init, int rounds, AggregationStrategy strategy);

private:
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    int n_clients_ = 0;
};

/// Connects to a server and serves rounds from `handle` until Shutdown.
void run_socket_client(const std::string& host, std::uint16_t port, ClientHandle& handle);

}  // namespace fedrlhf
