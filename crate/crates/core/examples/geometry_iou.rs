//! Overlap measures between oriented boxes: IoU in the floor plane and in
//! 3D, DIoU, and the overlap penalty used by the physics term.
//!
//!     cargo run --example geometry_iou

use std::f64::consts::FRAC_PI_4;

use scenelayout::geometry::{
    diou, footprint_intersection, iou, overlap_penalty, IouMode, Obb2, Obb3,
};

fn main() {
    let square = Obb2::new([0.0, 0.0], [0.5, 0.5], 0.0);
    let turned = Obb2::new([0.0, 0.0], [0.5, 0.5], FRAC_PI_4);
    println!(
        "unit square vs. itself turned 45 degrees: intersection {:.6} (octagon {:.6})",
        footprint_intersection(&square, &turned),
        2.0 * (2f64.sqrt() - 1.0)
    );

    let table = Obb3::new([2.0, 2.0, 0.375], [1.2, 0.8, 0.75], 0.0);
    println!("\nchair sliding away from a table:");
    println!("offset  iou_xy  iou_xyz    diou  penalty");
    for dx in [0.0, 0.3, 0.6, 0.9, 1.2] {
        let chair = Obb3::new([2.0 + dx, 2.0, 0.45], [0.45, 0.45, 0.9], 0.3);
        println!(
            "{dx:>6.1}  {:>6.3}  {:>7.3}  {:>6.3}  {:>7.3}",
            iou(&table, &chair, IouMode::Xy),
            iou(&table, &chair, IouMode::Xyz),
            diou(&table, &chair, IouMode::Xyz),
            overlap_penalty(&table, &chair, IouMode::Xyz),
        );
    }
}
