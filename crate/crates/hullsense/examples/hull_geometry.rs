//! Planar hull geometry: build hulls of sample sets, measure diameters,
//! barycenters and distances to the relative boundary.
//!
//! ```bash
//! cargo run -p hullsense --example hull_geometry
//! ```

use hullsense::geometry::{
    barycenter, consensus_distance, contains, convex_hull, diameter, dist_to_relative_boundary,
    Point,
};

fn main() {
    let samples = vec![
        Point::xy(-4.0, 2.0),
        Point::xy(3.5, 4.0),
        Point::xy(4.5, -3.5),
        Point::xy(-2.5, -4.0),
    ];

    let hull = convex_hull(&samples).unwrap();
    println!("hull dimension: {}", hull.dim());
    println!("hull vertices (counter-clockwise):");
    for v in hull.vertices() {
        println!("  ({:7.3}, {:7.3})", v.coords()[0], v.coords()[1]);
    }

    let center = barycenter(&samples).unwrap();
    println!(
        "barycenter: ({:.3}, {:.3})",
        center.coords()[0],
        center.coords()[1]
    );
    println!("disagreement diameter: {:.6}", diameter(&samples).unwrap());
    println!(
        "distance to agreement set: {:.6}",
        consensus_distance(&samples).unwrap().0
    );
    println!(
        "barycenter margin to the relative boundary: {:.6}",
        dist_to_relative_boundary(&hull, &center)
    );

    // Degenerate hulls are first-class: two coincident samples give a
    // point, collinear samples a segment.
    let segment = convex_hull(&[Point::xy(0.0, 0.0), Point::xy(2.0, 2.0)]).unwrap();
    println!(
        "segment hull: dim {}, midpoint margin {:.4}, contains (1,1): {}",
        segment.dim(),
        dist_to_relative_boundary(&segment, &Point::xy(1.0, 1.0)),
        contains(&segment, &Point::xy(1.0, 1.0), 1e-9),
    );
}
