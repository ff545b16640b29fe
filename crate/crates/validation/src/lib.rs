//! Holds the `acceptance` test target, which reports one PASS/FAIL line per
//! criterion. Run it with `cargo test -p fracwave-validation --test acceptance`.
