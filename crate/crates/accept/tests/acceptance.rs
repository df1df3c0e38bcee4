use std::io::Write;

use byzagg_accept::{run, ALL};

// Writes to the raw stderr handle so the report shows up without `--nocapture`.
#[test]
fn acceptance_suite() {
    let mut err = std::io::stderr().lock();
    writeln!(err).unwrap();
    let mut ran = 0;
    for id in ALL {
        let r = run(id).expect("known id").expect("criterion runs");
        writeln!(err, "{r}").unwrap();
        for d in &r.details {
            writeln!(err, "    {d}").unwrap();
        }
        ran += 1;
    }
    assert_eq!(ran, ALL.len());
}
