#include <iostream>

#include "qm9.hpp"

int main() {
    const auto dir = kspec::acceptance::qm9_dir();
    if (!dir) {
        std::cout << "SKIP qm9_desk_scale: KSPEC_QM9_DIR not set\n";
        return 77;
    }
    try {
        const auto outcome = kspec::acceptance::run_qm9(*dir);
        std::cout << (outcome.pass ? "PASS" : "FAIL") << " qm9_desk_scale: " << outcome.detail << '\n';
        return outcome.pass ? 0 : 1;
    } catch (const std::exception& e) {
        std::cout << "FAIL qm9_desk_scale: " << e.what() << '\n';
        return 1;
    }
}
