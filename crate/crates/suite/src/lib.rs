//! Acceptance suite for `biortho-core`; the criteria live in
//! `tests/acceptance.rs`.
