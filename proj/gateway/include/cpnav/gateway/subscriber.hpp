#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>

namespace cpnav::gateway {

/// Outbound queue of one connected client. push never blocks: when the
/// queue is full the oldest droppable message goes. Messages pushed with
/// droppable=false (errors, final results) are only evicted if nothing
/// else is left to drop.
class Subscriber {
public:
    explicit Subscriber(std::size_t capacity);

    void push(std::string message, bool droppable = true);
    std::optional<std::string> pop();

    // Called (outside the lock) after every push; the transport uses it to
    // schedule a write.
    void set_notify(std::function<void()> notify);

    // Ask the transport to close once the queue has drained.
    void request_close();
    bool close_requested() const;

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const;
    std::uint64_t dropped() const;
    std::uint64_t delivered() const;

private:
    struct Item {
        std::string text;
        bool droppable = true;
    };

    const std::size_t capacity_;
    mutable std::mutex mu_;
    std::deque<Item> queue_;
    std::function<void()> notify_;
    std::uint64_t dropped_ = 0;
    std::uint64_t delivered_ = 0;
    bool close_ = false;
};

}  // namespace cpnav::gateway
