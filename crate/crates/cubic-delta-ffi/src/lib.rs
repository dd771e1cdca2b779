//! C ABI surface; fleshed out after the core library stabilizes.
