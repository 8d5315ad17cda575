#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace netpnc {

/// Raised for malformed scenario or configuration input.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Link {
    std::size_t origin = 0;
    std::size_t destination = 0;
    std::string label;
};

/// Queues, directed single-hop links and the conflict groups that limit
/// simultaneous activations. Link order is the column order of every matrix
/// derived from the topology.
class NetworkTopology {
public:
    NetworkTopology() = default;

    NetworkTopology(std::size_t queue_count,
                    std::vector<Link> links,
                    std::vector<std::vector<std::size_t>> conflict_groups,
                    std::vector<std::string> queue_names = {})
        : queue_count_(queue_count)
        , links_(std::move(links))
        , groups_(std::move(conflict_groups))
        , names_(std::move(queue_names))
    {
        if (queue_count_ == 0)
            throw ConfigError("topology: queue count must be positive");
        if (!names_.empty() && names_.size() != queue_count_)
            throw ConfigError("topology: queue name count does not match queue count");
        if (names_.empty())
            for (std::size_t i = 0; i < queue_count_; ++i)
                names_.push_back("q" + std::to_string(i));

        std::vector<bool> covered(links_.size(), false);
        for (std::size_t j = 0; j < links_.size(); ++j) {
            const auto& l = links_[j];
            if (l.origin >= queue_count_ || l.destination >= queue_count_)
                throw ConfigError("topology: link '" + l.label + "' references an unknown queue");
            if (l.origin == l.destination)
                throw ConfigError("topology: link '" + l.label + "' has identical origin and destination");
            if (links_[j].label.empty())
                links_[j].label = "l" + std::to_string(j);
        }
        for (const auto& g : groups_)
            for (auto j : g) {
                if (j >= links_.size())
                    throw ConfigError("topology: conflict group references unknown link index " + std::to_string(j));
                covered[j] = true;
            }
        for (std::size_t j = 0; j < links_.size(); ++j)
            if (!covered[j])
                throw ConfigError("topology: link '" + links_[j].label + "' is not in any conflict group");
    }

    std::size_t queue_count() const { return queue_count_; }
    std::size_t link_count() const { return links_.size(); }
    const std::vector<Link>& links() const { return links_; }
    const Link& link(std::size_t j) const { return links_.at(j); }
    const std::vector<std::vector<std::size_t>>& conflict_groups() const { return groups_; }
    const std::vector<std::string>& queue_names() const { return names_; }
    const std::string& queue_name(std::size_t i) const { return names_.at(i); }

    std::optional<std::size_t> find_queue(const std::string& name) const
    {
        auto it = std::find(names_.begin(), names_.end(), name);
        if (it == names_.end())
            return std::nullopt;
        return static_cast<std::size_t>(it - names_.begin());
    }

    std::optional<std::size_t> find_link(const std::string& label) const
    {
        for (std::size_t j = 0; j < links_.size(); ++j)
            if (links_[j].label == label)
                return j;
        return std::nullopt;
    }

private:
    std::size_t queue_count_ = 0;
    std::vector<Link> links_;
    std::vector<std::vector<std::size_t>> groups_;
    std::vector<std::string> names_;
};

/// True-system queue contents in packets.
struct QueueState {
    std::vector<std::int64_t> values;

    QueueState() = default;
    explicit QueueState(std::size_t n) : values(n, 0) {}
    explicit QueueState(std::vector<std::int64_t> v) : values(std::move(v))
    {
        for (auto x : values)
            if (x < 0)
                throw std::invalid_argument("queue state entries must be nonnegative");
    }

    std::size_t size() const { return values.size(); }
    std::int64_t operator[](std::size_t i) const { return values.at(i); }
    bool operator==(const QueueState&) const = default;
};

struct ArrivalEvent {
    std::size_t time = 0;
    std::size_t origin = 0;
    std::size_t destination_queue = 0;
    std::string packet_id;
};

/// Column j carries -1 at the origin and +1 at the destination of link j.
inline Eigen::MatrixXi routing_matrix(const NetworkTopology& topo)
{
    Eigen::MatrixXi r = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(topo.queue_count()),
                                              static_cast<Eigen::Index>(topo.link_count()));
    for (std::size_t j = 0; j < topo.link_count(); ++j) {
        const auto& l = topo.link(j);
        r(static_cast<Eigen::Index>(l.origin), static_cast<Eigen::Index>(j)) = -1;
        r(static_cast<Eigen::Index>(l.destination), static_cast<Eigen::Index>(j)) = 1;
    }
    return r;
}

/// Element-wise max{0, R}.
inline Eigen::MatrixXd positive_part(const Eigen::MatrixXi& r)
{
    return r.cast<double>().cwiseMax(0.0);
}

/// One row per conflict group over `subsystem_count` stacked copies of the
/// link set (subsystem-major columns). Semantics: C u <= 1.
inline Eigen::MatrixXi constituency_matrix(const NetworkTopology& topo, std::size_t subsystem_count)
{
    if (subsystem_count == 0)
        throw std::invalid_argument("constituency_matrix: subsystem count must be positive");
    const auto m = topo.link_count();
    const auto& groups = topo.conflict_groups();
    Eigen::MatrixXi c = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(groups.size()),
                                              static_cast<Eigen::Index>(m * subsystem_count));
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (std::size_t i = 0; i < subsystem_count; ++i)
            for (auto j : groups[g])
                c(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(i * m + j)) = 1;
    return c;
}

/// Checks C u <= 1 for a binary activation vector; returns the first violated
/// row, if any.
inline std::optional<std::size_t> constituency_violation(const Eigen::MatrixXi& c, std::span<const std::uint8_t> u)
{
    if (static_cast<std::size_t>(c.cols()) != u.size())
        throw std::invalid_argument("constituency_violation: dimension mismatch");
    for (Eigen::Index g = 0; g < c.rows(); ++g) {
        int sum = 0;
        for (Eigen::Index j = 0; j < c.cols(); ++j)
            sum += c(g, j) * u[static_cast<std::size_t>(j)];
        if (sum > 1)
            return static_cast<std::size_t>(g);
    }
    return std::nullopt;
}

/// Plant evolution with R+ semantics: successful transmissions add a copy at
/// the destination and never remove the packet from its origin.
inline QueueState step_true_system(const QueueState& q,
                                   const NetworkTopology& topo,
                                   std::span<const std::size_t> active_links,
                                   std::span<const std::uint8_t> success)
{
    if (q.size() != topo.queue_count())
        throw std::invalid_argument("step_true_system: queue state has wrong dimension");
    if (active_links.size() != success.size())
        throw std::invalid_argument("step_true_system: one success flag per active link required");

    const auto& groups = topo.conflict_groups();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        std::size_t hits = 0;
        for (auto j : active_links)
            if (std::find(groups[g].begin(), groups[g].end(), j) != groups[g].end())
                ++hits;
        if (hits > 1) {
            std::ostringstream os;
            os << "step_true_system: " << hits << " active links in conflict group " << g;
            throw std::invalid_argument(os.str());
        }
    }

    QueueState next = q;
    for (std::size_t k = 0; k < active_links.size(); ++k) {
        const auto j = active_links[k];
        if (j >= topo.link_count())
            throw std::invalid_argument("step_true_system: unknown link index " + std::to_string(j));
        if (success[k])
            next.values[topo.link(j).destination] += 1;
    }
    return next;
}

} // namespace netpnc
