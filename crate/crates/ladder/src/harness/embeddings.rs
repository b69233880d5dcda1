//! Hidden-layer embedding export for offline visualization.

use super::HarnessError;
use crate::encoder::{describe, EncodedState};
use crate::qnet::{forward_sparse, NetworkParams};
use crate::sim::{AuctionRequest, SimError, World};
use std::io::Write;

/// Draw `count` requests from the world, rolling days as needed.
pub fn sample_requests(world: &mut World, count: usize) -> Result<Vec<AuctionRequest>, HarnessError> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        match world.next_auction() {
            Ok(r) => out.push(r),
            Err(SimError::EpisodeExhausted) => world.reset_day(),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Write one CSV row per request: auction id, publisher label, then the
/// hidden-layer activations of the network on that request.
pub fn export_embeddings<W: Write>(
    params: &NetworkParams,
    world: &World,
    requests: &[AuctionRequest],
    mut w: W,
) -> Result<(), HarnessError> {
    let dim = params.spec().hidden_dim;
    write!(w, "auction_id,publisher")?;
    for j in 0..dim {
        write!(w, ",h{j:03}")?;
    }
    writeln!(w)?;
    for req in requests {
        let state = EncodedState::one_hot(describe(&world.request_summary(req)).text());
        let (_, trace) = forward_sparse(params, state.sparse_view())?;
        write!(w, "{},{}", req.auction_id, world.publisher_label(req.publisher_idx))?;
        for v in &trace.hidden_out {
            write!(w, ",{v:.6}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnet::{ConvSpec, NetSpec};
    use crate::sim::WorldConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_net() -> NetworkParams {
        let spec = NetSpec {
            input_len: 600,
            input_width: 71,
            convs: vec![
                ConvSpec { kernel: 7, out_ch: 2, pool: 3 },
                ConvSpec { kernel: 5, out_ch: 2, pool: 4 },
            ],
            hidden_dim: 5,
            action_count: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        NetworkParams::init(spec, &mut rng).unwrap()
    }

    #[test]
    fn zero_requests_writes_header_only() {
        let params = test_net();
        let world = World::new(WorldConfig::default_desk(), 1).unwrap();
        let mut buf = Vec::new();
        export_embeddings(&params, &world, &[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("auction_id,publisher,h000,h001"));
    }

    #[test]
    fn row_count_matches_and_identical_requests_repeat_rows() {
        let params = test_net();
        let mut world = World::new(WorldConfig::default_desk(), 1).unwrap();
        let reqs = sample_requests(&mut world, 4).unwrap();
        let doubled: Vec<AuctionRequest> =
            reqs.iter().chain(reqs.iter()).cloned().collect();
        let mut buf = Vec::new();
        export_embeddings(&params, &world, &doubled, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 9);
        // The same request renders the same embedding row.
        assert_eq!(lines[1], lines[5]);
        assert_eq!(lines[4], lines[8]);
    }
}
