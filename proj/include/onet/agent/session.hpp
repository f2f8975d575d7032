#ifndef ONET_AGENT_SESSION_HPP
#define ONET_AGENT_SESSION_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "../alarms.hpp"
#include "../netops.hpp"

namespace onet::agent {

/// Live network and alarm state of one operator session. Only committed
/// values live here; what-if computations work on copies.
struct SessionState {
    NetworkTopology topology;
    std::vector<ServiceDemand> demands;
    std::optional<netops::AllocationReport> allocation;  // committed provisioning
    std::map<std::string, double> launch_dbm;            // committed per-service launch power
    std::vector<alarms::Alarm> alarms;

    /// Demands with committed launch powers applied.
    std::vector<ServiceDemand> effective_demands() const {
        auto out = demands;
        for (auto& d : out)
            if (auto it = launch_dbm.find(d.id); it != launch_dbm.end()) d.launch_power_dbm = it->second;
        return out;
    }

    /// The committed allocation, or a fresh first-fit provisioning when none
    /// has been committed yet.
    netops::AllocationReport working_allocation(std::size_t k) const {
        if (allocation) return *allocation;
        if (demands.empty()) throw DomainError("session has no service demands");
        return netops::provision(demands, topology, k);
    }

    json network_json() const {
        json d = json::array();
        for (const auto& x : demands) d.push_back(to_json(x));
        return {{"demands", d},
                {"allocation", allocation ? netops::to_json(*allocation) : json(nullptr)},
                {"launch_dbm", launch_dbm}};
    }

    /// Digest of everything a mutating tool may change.
    std::string network_digest() const { return digest(network_json()); }

    /// Most recent alarm window.
    std::optional<alarms::AlarmBatch> latest_batch(std::int64_t window_ms, std::size_t cap) const {
        auto batches = alarms::window_batches(alarms, window_ms, cap);
        if (batches.empty()) return std::nullopt;
        return std::move(batches.back());
    }
};

}  // namespace onet::agent

#endif  // ONET_AGENT_SESSION_HPP
