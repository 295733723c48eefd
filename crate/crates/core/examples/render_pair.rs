//! Renders one live and one spoof presentation to PNG files.
//!
//! cargo run -p ftirpad --example render_pair -- <out_dir> [seed]

use std::path::PathBuf;

use ftirpad::image::write_png;
use ftirpad::sim::{render_views, FingerSpec, MaterialSpec, Pose, RenderOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    std::fs::create_dir_all(&out)?;
    let opts = RenderOptions::default();
    let pose = Pose {
        dx: 0.04,
        dy: -0.03,
        rotation_deg: 12.0,
        pressure: 1.0,
    };
    let finger = FingerSpec::live(seed, 0, 0);
    let live = render_views(&finger, None, &pose, &opts, seed)?;
    write_png(&out.join("live_ftir.png"), &live.ftir, None)?;
    write_png(&out.join("live_direct.png"), &live.direct, None)?;
    let donor = FingerSpec::spoof_donor(seed, "Wood Glue", 0);
    let spoof = render_views(&donor, Some(&MaterialSpec::wood_glue()), &pose, &opts, seed)?;
    write_png(&out.join("spoof_ftir.png"), &spoof.ftir, None)?;
    write_png(&out.join("spoof_direct.png"), &spoof.direct, None)?;
    println!("wrote 4 images to {}", out.display());
    Ok(())
}
