// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace saloha {

/// Conditioning event has zero probability (e.g. no channel state below the
/// threshold, or a feedback symbol that cannot occur under the given history).
struct null_event_error : std::domain_error {
    explicit null_event_error(const std::string& what) : std::domain_error(what) {}
};

/// The slot duration is too coarse for the requested rates: lambda*tau + mu*tau > 1.
struct time_scale_error : std::domain_error {
    explicit time_scale_error(const std::string& what) : std::domain_error(what) {}
};

/// An iterative solve did not reach its tolerance within the iteration cap.
struct convergence_error : std::runtime_error {
    explicit convergence_error(const std::string& what) : std::runtime_error(what) {}
};

/// A policy table was queried at a state it does not cover.
struct table_miss_error : std::runtime_error {
    explicit table_miss_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace saloha
