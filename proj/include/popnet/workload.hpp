#pragma once

#include <popnet/platform.hpp>
#include <popnet/topology.hpp>
#include <popnet/types.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace popnet {

inline constexpr int scenario_format_version = 1;

struct InstanceTick {
    std::string id;
    std::string pop;
    double usage = 0.0;
    double limit = 0.0;
    double expected = 0.0;

    bool operator==(const InstanceTick&) const = default;
};

// Advances the clock by `dt` seconds and records one usage sample per live
// instance: min(demand, cpu_fraction), the hard cap CPU bandwidth control
// enforces. Throws Error(invalid_argument) unless dt > 0.
std::vector<InstanceTick> tick(PlatformState& state, double dt);

// Multiplicative gaussian noise on usage, clamped to [0, limit].
struct NoiseConfig {
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

struct AllocateAction {
    std::string pop;
    ResourceRequest request;
    double demand = 1.0;
    std::string image;
    // Optional handle for release actions.
    std::string label;
};

struct ReleaseAction {
    enum class Selector { oldest, newest, label };
    Selector selector = Selector::oldest;
    // Restricts oldest/newest to one PoP; empty means any PoP.
    std::string pop;
    std::string label;
};

struct ScenarioAction {
    double t = 0.0;
    std::variant<AllocateAction, ReleaseAction> op;
};

struct Scenario {
    std::string name;
    TopologyDoc topology;
    // Replaces every PoP's model when set.
    std::optional<ResourceModelRef> model;
    double e_cpu = 0.5;
    std::vector<ScenarioAction> actions;
    double duration_s = 0.0;
    double tick_s = 1.0;
    std::optional<NoiseConfig> noise;
};

// Throws Error(scenario_error) for unordered actions, a duration shorter than
// the last action, non-positive ticks, or release labels never allocated.
void validate_scenario(const Scenario& scenario);

// JSON scenario format. A string "topology" is a path resolved against
// `base_dir`; an object is an inline topology document.
Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

struct PopTick {
    std::string pop;
    double usage = 0.0;
    double limit = 0.0;
    double expected = 0.0;

    bool operator==(const PopTick&) const = default;
};

struct TickRecord {
    double t = 0.0;
    std::vector<InstanceTick> instances;
    // One entry per PoP in declaration order.
    std::vector<PopTick> pops;
};

enum class EventKind { accepted, rejected, released, release_skipped };

std::string_view to_string(EventKind kind) noexcept;

struct ScenarioEvent {
    double t = 0.0;
    EventKind kind = EventKind::accepted;
    std::string pop;
    std::string instance_id;
    std::string label;
    std::optional<RejectReason> reason;
};

struct UsageSeries {
    std::string scenario;
    std::vector<TickRecord> ticks;
    std::vector<ScenarioEvent> events;
};

// Deterministic replay. Sample k covers [k*tick_s, (k+1)*tick_s) and is
// stamped k*tick_s; actions with t <= k*tick_s are applied before it.
// Throws Error(scenario_error) naming the timestamp of a failing action.
UsageSeries run_scenario(const Scenario& scenario);

inline constexpr std::string_view pop_aggregate_id = "__pop_aggregate__";

// CSV with header t,instance_id,pop,usage,limit,expected; instance rows then
// one aggregate row per PoP for every tick. Returns the rows written,
// excluding the header. Throws Error(io_error) if the stream fails.
std::size_t export_series(const UsageSeries& series, std::ostream& out);

// Built-in experiments:
//   experiment1_modelA, experiment1_modelB - one PoP with 4 CUs, 1-CU stress
//     requests every 20 s until 8, then releases one by one every 20 s.
//   experiment2_<model>_k<N> - two PoPs with 2 CUs each, two stress
//     instances in pop2 and N in pop1. <model> is none, shared, modelA or
//     modelB.
std::optional<Scenario> builtin_scenario(std::string_view name);
std::vector<std::string> builtin_scenario_names();

// Points of the cross-PoP isolation sweep.
inline constexpr int isolation_sweep_counts[] = {0, 1, 2, 4, 8, 16, 32};

struct SweepPoint {
    int pop1_requested = 0;
    int pop1_accepted = 0;
    // Per-instance usage at the end of the point's run; 0 for empty PoPs.
    double pop1_usage_per_instance = 0.0;
    double pop2_usage_per_instance = 0.0;
};

// One independent scenario run per count. `model` is none, shared, modelA
// or modelB.
std::vector<SweepPoint> run_isolation_sweep(std::string_view model,
                                            std::span<const int> counts = isolation_sweep_counts);

std::size_t export_sweep(std::span<const SweepPoint> points, std::ostream& out);

}  // namespace popnet
