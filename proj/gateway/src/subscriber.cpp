#include "cpnav/gateway/subscriber.hpp"

#include <algorithm>

#include "cpnav/error.hpp"

namespace cpnav::gateway {

Subscriber::Subscriber(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw DomainError("subscriber queue capacity must be positive");
}

void Subscriber::push(std::string message, bool droppable) {
    std::function<void()> notify;
    {
        std::lock_guard lock(mu_);
        if (queue_.size() >= capacity_) {
            auto victim = std::find_if(queue_.begin(), queue_.end(), [](const Item& i) { return i.droppable; });
            if (victim == queue_.end()) victim = queue_.begin();
            queue_.erase(victim);
            ++dropped_;
        }
        queue_.push_back({std::move(message), droppable});
        notify = notify_;
    }
    if (notify) notify();
}

std::optional<std::string> Subscriber::pop() {
    std::lock_guard lock(mu_);
    if (queue_.empty()) return std::nullopt;
    std::string s = std::move(queue_.front().text);
    queue_.pop_front();
    ++delivered_;
    return s;
}

void Subscriber::set_notify(std::function<void()> notify) {
    std::lock_guard lock(mu_);
    notify_ = std::move(notify);
}

void Subscriber::request_close() {
    std::function<void()> notify;
    {
        std::lock_guard lock(mu_);
        close_ = true;
        notify = notify_;
    }
    if (notify) notify();
}

bool Subscriber::close_requested() const {
    std::lock_guard lock(mu_);
    return close_;
}

std::size_t Subscriber::size() const {
    std::lock_guard lock(mu_);
    return queue_.size();
}

std::uint64_t Subscriber::dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
}

std::uint64_t Subscriber::delivered() const {
    std::lock_guard lock(mu_);
    return delivered_;
}

}  // namespace cpnav::gateway
