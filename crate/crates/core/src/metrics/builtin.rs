//! The built-in measure set, registered at startup: seven QoS measures,
//! five bitstream measures, six video-quality measures.
//!
//! Configurable mappings (PLD interval count, the PSNR→MOS table, G.1070
//! coefficients) are captured at registry-build time; every result carries
//! its provenance in annotations so reports are self-describing.

use crate::bitstream;
use crate::codec;
use crate::metrics::{
    AnalysisContext, ContextField, MeasureFailure, MeasureResult, MeterKind, MeterRegistry,
};
use crate::qos;
use crate::rawvideo::RawVideo;
use crate::vq::{self, G1070Coefficients, MosTable};

/// Parameters of the configurable mappings, fixed when the registry is
/// built.
#[derive(Debug, Clone)]
pub struct AnalysisParams {
    /// Interval count K for the loss-distribution and DIV-interval series.
    pub pld_intervals: usize,
    pub mos_table: MosTable,
    /// G.1070 coefficient set; the operating point (bitrate, frame rate,
    /// loss) is filled in from the context at run time. Absent coefficients
    /// make the g1070 measure report a failure, not a crash.
    pub g1070: Option<G1070Coefficients>,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            pld_intervals: 10,
            mos_table: MosTable::default(),
            g1070: None,
        }
    }
}

fn fail(e: impl std::fmt::Display) -> MeasureFailure {
    MeasureFailure::new(e.to_string())
}

fn mos_table_provenance(table: &MosTable) -> String {
    format!(
        "mapping: PSNR > {} -> 5, >= {} -> 4, >= {} -> 3, >= {} -> 2, else 1",
        table.excellent, table.good, table.fair, table.poor
    )
}

/// Decodes the reference stream and trims both MOS series to the aligned
/// length, returning (received MOS, reference MOS).
fn mos_pair(ctx: &AnalysisContext, table: &MosTable) -> Result<(Vec<u8>, Vec<u8>), MeasureFailure> {
    let rx_raw = ctx.rx_raw.as_ref().expect("requirement checked");
    let ref_raw = ctx.ref_raw.as_ref().expect("requirement checked");
    let ref_encoded = ctx.ref_encoded.as_ref().expect("requirement checked");

    let last = ref_encoded
        .frames
        .last()
        .ok_or_else(|| MeasureFailure::new("reference stream has no frames"))?;
    let expected = last.frame_number as usize + 1;
    let (ref_decoded, _) = codec::decode(ref_encoded, expected).map_err(fail)?;

    // The aligned reference may have lost its head to first-GOP dismissal;
    // compare against the matching tail of the decoded reference.
    if ref_decoded.frames.len() < ref_raw.frames.len() {
        return Err(MeasureFailure::new(format!(
            "decoded reference has {} frames but the aligned reference has {}",
            ref_decoded.frames.len(),
            ref_raw.frames.len()
        )));
    }
    let skip = ref_decoded.frames.len() - ref_raw.frames.len();
    let mut ref_tail = RawVideo::new(
        ref_decoded.width,
        ref_decoded.height,
        ref_decoded.fps_num,
        ref_decoded.fps_den,
    );
    for frame in ref_decoded.frames.into_iter().skip(skip) {
        ref_tail.push_frame(frame);
    }

    let rx_mos = table.mos_series(&vq::psnr_series(rx_raw, ref_raw).map_err(fail)?);
    let ref_mos = table.mos_series(&vq::psnr_series(&ref_tail, ref_raw).map_err(fail)?);
    Ok((rx_mos, ref_mos))
}

/// Builds the registry with every built-in measure registered.
pub fn build_registry(params: &AnalysisParams) -> MeterRegistry {
    let mut registry = MeterRegistry::new();
    let must = |result: Result<(), crate::metrics::RegistryError>| {
        result.expect("built-in names are unique by construction")
    };

    // ---- QoS meter ----------------------------------------------------
    must(registry.register(
        MeterKind::Qos,
        "latency",
        vec![ContextField::RttSamples],
        |ctx| {
            let samples = ctx.rtt_samples.as_ref().expect("requirement checked");
            let value = qos::latency(samples).map_err(fail)?;
            Ok(
                MeasureResult::value(MeterKind::Qos, "latency", "seconds", value).with_annotations(
                    vec![format!(
                        "half the mean of {} round-trip samples",
                        samples.len()
                    )],
                ),
            )
        },
    ));

    must(registry.register(
        MeterKind::Qos,
        "interarrival",
        vec![ContextField::PacketRecords],
        |ctx| {
            let records = ctx.packet_records.as_ref().expect("requirement checked");
            let deltas = qos::interarrival(records).map_err(fail)?;
            let points = deltas
                .iter()
                .enumerate()
                .map(|(i, &y)| ((i + 1) as f64, y))
                .collect();
            Ok(
                MeasureResult::series(MeterKind::Qos, "interarrival", "seconds", points)
                    .with_annotations(vec!["x: packet index of the later packet".to_owned()]),
            )
        },
    ));

    must(registry.register(
        MeterKind::Qos,
        "jitter",
        vec![ContextField::PacketRecords],
        |ctx| {
            let records = ctx.packet_records.as_ref().expect("requirement checked");
            let series = qos::jitter(records).map_err(fail)?;
            Ok(
                MeasureResult::indexed_series(MeterKind::Qos, "jitter", "seconds", &series)
                    .with_annotations(vec!["x: packet index".to_owned()]),
            )
        },
    ));

    must(registry.register(
        MeterKind::Qos,
        "clock_skew",
        vec![ContextField::PacketRecords],
        |ctx| {
            let records = ctx.packet_records.as_ref().expect("requirement checked");
            let series = qos::clock_skew(records);
            Ok(
                MeasureResult::indexed_series(MeterKind::Qos, "clock_skew", "seconds", &series)
                    .with_annotations(vec![
                        "x: packet index; series normalized to start at 0".to_owned()
                    ]),
            )
        },
    ));

    must(registry.register(
        MeterKind::Qos,
        "bandwidth",
        vec![ContextField::PacketRecords],
        |ctx| {
            let records = ctx.packet_records.as_ref().expect("requirement checked");
            let series = qos::bandwidth(records);
            Ok(
                MeasureResult::indexed_series(MeterKind::Qos, "bandwidth", "bits/s", &series)
                    .with_annotations(vec!["x: packet index; trailing 1.0 s window".to_owned()]),
            )
        },
    ));

    must(registry.register(
        MeterKind::Qos,
        "plr",
        vec![ContextField::PacketRecords],
        |ctx| {
            let records = ctx.packet_records.as_ref().expect("requirement checked");
            let value = qos::plr(records).map_err(fail)?;
            Ok(
                MeasureResult::value(MeterKind::Qos, "plr", "fraction", value)
                    .with_annotations(vec!["sequence gaps divided by received count".to_owned()]),
            )
        },
    ));

    let k = params.pld_intervals;
    must(registry.register(
        MeterKind::Qos,
        "pld",
        vec![ContextField::PacketRecords],
        move |ctx| {
            let records = ctx.packet_records.as_ref().expect("requirement checked");
            let (series, mut annotations) = qos::pld(records, k).map_err(fail)?;
            annotations.insert(
                0,
                format!("transmission time split into {k} equal intervals"),
            );
            Ok(
                MeasureResult::indexed_series(MeterKind::Qos, "pld", "fraction", &series)
                    .with_annotations(annotations),
            )
        },
    ));

    // ---- Bitstream meter ----------------------------------------------
    fn framing_measure(name: &'static str, stream: &codec::EncodedStream) -> MeasureResult {
        let structure = bitstream::framing_structure(stream);
        let points = structure
            .iter()
            .map(|e| (f64::from(e.frame_number), e.size as f64))
            .collect();
        let types: Vec<&str> = structure
            .iter()
            .map(|e| match e.frame_type {
                codec::FrameType::I => "I",
                codec::FrameType::P => "P",
            })
            .collect();
        MeasureResult::series(MeterKind::Bs, name, "bytes", points)
            .with_annotations(vec![format!("x: frame number; types: {}", types.join(""))])
    }

    must(registry.register(
        MeterKind::Bs,
        "framing_rx",
        vec![ContextField::RxEncoded],
        |ctx| {
            Ok(framing_measure(
                "framing_rx",
                ctx.rx_encoded.as_ref().expect("requirement checked"),
            ))
        },
    ));

    must(registry.register(
        MeterKind::Bs,
        "framing_ref",
        vec![ContextField::RefEncoded],
        |ctx| {
            Ok(framing_measure(
                "framing_ref",
                ctx.ref_encoded.as_ref().expect("requirement checked"),
            ))
        },
    ));

    must(registry.register(
        MeterKind::Bs,
        "gop_observed",
        vec![ContextField::RxEncoded],
        |ctx| {
            let stream = ctx.rx_encoded.as_ref().expect("requirement checked");
            let gops =
                bitstream::observed_gops(&bitstream::framing_structure(stream)).map_err(fail)?;
            let values: Vec<f64> = gops.iter().map(|&g| g as f64).collect();
            Ok(
                MeasureResult::indexed_series(MeterKind::Bs, "gop_observed", "frames", &values)
                    .with_annotations(vec![
                        "distances between consecutive received I-frames".to_owned()
                    ]),
            )
        },
    ));

    must(registry.register(
        MeterKind::Bs,
        "gop_size_estimate",
        vec![ContextField::RxEncoded],
        |ctx| {
            let stream = ctx.rx_encoded.as_ref().expect("requirement checked");
            let gops =
                bitstream::observed_gops(&bitstream::framing_structure(stream)).map_err(fail)?;
            let est = bitstream::gop_size_estimate(&gops).map_err(fail)?;
            let mut annotations = vec![format!(
                "mean {:.4}, population std-dev {:.4}",
                est.mean, est.std_dev
            )];
            if est.fallback {
                annotations.push("all values atypical; full-list mean used".to_owned());
            }
            Ok(
                MeasureResult::value(MeterKind::Bs, "gop_size_estimate", "frames", est.estimate)
                    .with_annotations(annotations),
            )
        },
    ));

    must(registry.register(
        MeterKind::Bs,
        "iframe_loss",
        vec![ContextField::RxEncoded],
        |ctx| {
            let stream = ctx.rx_encoded.as_ref().expect("requirement checked");
            let gops =
                bitstream::observed_gops(&bitstream::framing_structure(stream)).map_err(fail)?;
            let loss = bitstream::iframe_loss(&gops).map_err(fail)?;
            Ok(
                MeasureResult::value(MeterKind::Bs, "iframe_loss", "fraction", loss.rate)
                    .with_annotations(vec![
                        format!("oversized GOP count: {}", loss.count),
                        format!("stricter multiple-loss count: {}", loss.stricter_count),
                        "rate = count / (count + received I-frames)".to_owned(),
                    ]),
            )
        },
    ));

    // ---- Video-quality meter -------------------------------------------
    must(registry.register(
        MeterKind::Vq,
        "psnr",
        vec![ContextField::RxRaw, ContextField::RefRaw],
        |ctx| {
            let rx = ctx.rx_raw.as_ref().expect("requirement checked");
            let reference = ctx.ref_raw.as_ref().expect("requirement checked");
            let series = vq::psnr_series(rx, reference).map_err(fail)?;
            Ok(
                MeasureResult::indexed_series(MeterKind::Vq, "psnr", "dB", &series)
                    .with_annotations(vec![
                        "luma plane, peak 255; identical frames clamp to 100 dB".to_owned(),
                    ]),
            )
        },
    ));

    must(registry.register(
        MeterKind::Vq,
        "ssim",
        vec![ContextField::RxRaw, ContextField::RefRaw],
        |ctx| {
            let rx = ctx.rx_raw.as_ref().expect("requirement checked");
            let reference = ctx.ref_raw.as_ref().expect("requirement checked");
            let series = vq::ssim_series(rx, reference).map_err(fail)?;
            Ok(
                MeasureResult::indexed_series(MeterKind::Vq, "ssim", "index", &series)
                    .with_annotations(vec![
                        "luma plane, 11x11 Gaussian window, sigma 1.5".to_owned()
                    ]),
            )
        },
    ));

    let table = params.mos_table;
    must(registry.register(
        MeterKind::Vq,
        "mos",
        vec![ContextField::RxRaw, ContextField::RefRaw],
        move |ctx| {
            let rx = ctx.rx_raw.as_ref().expect("requirement checked");
            let reference = ctx.ref_raw.as_ref().expect("requirement checked");
            let psnr = vq::psnr_series(rx, reference).map_err(fail)?;
            let mos: Vec<f64> = table
                .mos_series(&psnr)
                .iter()
                .map(|&m| f64::from(m))
                .collect();
            Ok(
                MeasureResult::indexed_series(MeterKind::Vq, "mos", "score", &mos)
                    .with_annotations(vec![mos_table_provenance(&table)]),
            )
        },
    ));

    let table = params.mos_table;
    must(registry.register(
        MeterKind::Vq,
        "div",
        vec![
            ContextField::RxRaw,
            ContextField::RefRaw,
            ContextField::RefEncoded,
        ],
        move |ctx| {
            let (rx_mos, ref_mos) = mos_pair(ctx, &table)?;
            let value = vq::div_from_mos(&rx_mos, &ref_mos).map_err(fail)?;
            Ok(
                MeasureResult::value(MeterKind::Vq, "div", "fraction", value).with_annotations(
                    vec![
                        "fraction of frames whose MOS fell below the reference encoding's MOS"
                            .to_owned(),
                        mos_table_provenance(&table),
                    ],
                ),
            )
        },
    ));

    let table = params.mos_table;
    let k = params.pld_intervals;
    must(registry.register(
        MeterKind::Vq,
        "div_intervals",
        vec![
            ContextField::RxRaw,
            ContextField::RefRaw,
            ContextField::RefEncoded,
        ],
        move |ctx| {
            let (rx_mos, ref_mos) = mos_pair(ctx, &table)?;
            let (series, mut annotations) =
                vq::div_intervals(&rx_mos, &ref_mos, k).map_err(fail)?;
            annotations.insert(
                0,
                format!("presentation timeline split into {k} equal intervals"),
            );
            Ok(
                MeasureResult::indexed_series(MeterKind::Vq, "div_intervals", "fraction", &series)
                    .with_annotations(annotations),
            )
        },
    ));

    let coefficients = params.g1070;
    must(registry.register(
        MeterKind::Vq,
        "g1070",
        vec![ContextField::PacketRecords, ContextField::SessionMeta],
        move |ctx| {
            let Some(mut c) = coefficients else {
                return Err(MeasureFailure::new("g1070 coefficients not configured"));
            };
            let records = ctx.packet_records.as_ref().expect("requirement checked");
            let meta = ctx.session_meta.as_ref().expect("requirement checked");
            c.br_v = meta.bitrate_kbps;
            c.fr_v = meta.fps();
            c.ppl_v = qos::plr(records).map_err(fail)? * 100.0;
            let out = vq::g1070_vq(&c).map_err(fail)?;
            Ok(
                MeasureResult::value(MeterKind::Vq, "g1070", "score", out.vq).with_annotations(
                    vec![
                        format!(
                            "Br_v {:.3} kbit/s, Fr_v {:.3} fps, Ppl_v {:.3} %",
                            c.br_v, c.fr_v, c.ppl_v
                        ),
                        format!(
                            "O_fr {:.6}, I_Ofr {:.6}, D_FrV {:.6}, D_PplV {:.6}, I_coding {:.6}",
                            out.o_fr, out.i_ofr, out.d_frv, out.d_pplv, out.i_coding
                        ),
                    ],
                ),
            )
        },
    ));

    registry
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{MeasureOutcome, SessionMeta};
    use crate::rawvideo::FrameBuffer;
    use crate::trace::PacketRecord;

    fn small_video(frames: usize) -> RawVideo {
        let mut video = RawVideo::new(16, 16, 25, 1);
        for i in 0..frames {
            let luma: Vec<u8> = (0..256).map(|p| ((i * 13 + p) % 200) as u8).collect();
            video.push_frame(FrameBuffer::new(16, 16, luma, vec![128; 64], vec![128; 64]));
        }
        video
    }

    fn paced_records(count: u64) -> Vec<PacketRecord> {
        (0..count)
            .map(|i| PacketRecord {
                size: 100,
                seq: i,
                rtp_ts: i as f64 * 0.04,
                arrival: i as f64 * 0.04,
            })
            .collect()
    }

    fn full_context() -> AnalysisContext {
        let video = small_video(10);
        let stream = codec::encode(&video, 5, 0);
        let (decoded, report) = codec::decode(&stream, 10).unwrap();
        AnalysisContext {
            packet_records: Some(paced_records(40)),
            rtt_samples: Some(vec![0.08, 0.12]),
            rx_encoded: Some(stream.clone()),
            ref_encoded: Some(stream),
            rx_raw: Some(decoded),
            ref_raw: Some(video),
            decode_report: Some(report),
            session_meta: Some(SessionMeta {
                fps_num: 25,
                fps_den: 1,
                gop_size: 5,
                bitrate_kbps: 300.0,
                codec: "gop-rle".to_owned(),
            }),
        }
    }

    fn g1070_fixture() -> G1070Coefficients {
        G1070Coefficients {
            v1: 1.0,
            v2: 0.02,
            v3: 4.0,
            v4: 100.0,
            v5: 1.0,
            v6: 2.0,
            v7: 0.001,
            v8: 10.0,
            v9: 200.0,
            v10: 0.5,
            v11: 1.0,
            v12: 0.5,
            br_v: 0.0,
            fr_v: 0.0,
            ppl_v: 0.0,
        }
    }

    #[test]
    fn startup_registry_lists_the_builtin_set() {
        let registry = build_registry(&AnalysisParams::default());
        assert_eq!(
            registry.names(MeterKind::Qos),
            vec![
                "latency",
                "interarrival",
                "jitter",
                "clock_skew",
                "bandwidth",
                "plr",
                "pld"
            ]
        );
        assert_eq!(
            registry.names(MeterKind::Bs),
            vec![
                "framing_rx",
                "framing_ref",
                "gop_observed",
                "gop_size_estimate",
                "iframe_loss"
            ]
        );
        assert_eq!(
            registry.names(MeterKind::Vq),
            vec!["psnr", "ssim", "mos", "div", "div_intervals", "g1070"]
        );
    }

    #[test]
    fn full_context_computes_every_measure() {
        let params = AnalysisParams {
            g1070: Some(g1070_fixture()),
            ..Default::default()
        };
        let registry = build_registry(&params);
        let ctx = full_context();
        let selected: Vec<String> = registry.all_names().iter().map(|s| s.to_string()).collect();
        let outcomes = registry.run(&selected, &ctx);
        assert_eq!(outcomes.len(), 18);
        for outcome in &outcomes {
            assert!(
                matches!(outcome, MeasureOutcome::Computed(_)),
                "{} was not computed: {outcome:?}",
                outcome.name()
            );
        }
    }

    #[test]
    fn lossless_context_scores_perfectly() {
        let params = AnalysisParams {
            g1070: Some(g1070_fixture()),
            ..Default::default()
        };
        let registry = build_registry(&params);
        let ctx = full_context();
        let outcomes = registry.run(
            &[
                "plr".to_owned(),
                "psnr".to_owned(),
                "mos".to_owned(),
                "div".to_owned(),
            ],
            &ctx,
        );
        let plr = outcomes[0].as_computed().unwrap();
        assert_eq!(plr.data, crate::metrics::MetricData::Value(0.0));
        if let crate::metrics::MetricData::Series(points) = &outcomes[1].as_computed().unwrap().data
        {
            assert!(points.iter().all(|&(_, y)| y == 100.0));
        } else {
            panic!("psnr must be a series");
        }
        if let crate::metrics::MetricData::Series(points) = &outcomes[2].as_computed().unwrap().data
        {
            assert!(points.iter().all(|&(_, y)| y == 5.0));
        } else {
            panic!("mos must be a series");
        }
        assert_eq!(
            outcomes[3].as_computed().unwrap().data,
            crate::metrics::MetricData::Value(0.0)
        );
    }

    #[test]
    fn trace_only_context_skips_video_measures() {
        let registry = build_registry(&AnalysisParams::default());
        let ctx = AnalysisContext {
            packet_records: Some(paced_records(10)),
            ..Default::default()
        };
        let outcomes = registry.run(
            &[
                "plr".to_owned(),
                "ssim".to_owned(),
                "latency".to_owned(),
                "framing_rx".to_owned(),
            ],
            &ctx,
        );
        assert!(matches!(&outcomes[0], MeasureOutcome::Computed(_)));
        assert!(
            matches!(&outcomes[1], MeasureOutcome::Skipped { reason, .. } if reason.contains("rx_raw"))
        );
        assert!(
            matches!(&outcomes[2], MeasureOutcome::Skipped { reason, .. } if reason.contains("rtt_samples"))
        );
        assert!(
            matches!(&outcomes[3], MeasureOutcome::Skipped { reason, .. } if reason.contains("rx_encoded"))
        );
    }

    #[test]
    fn unconfigured_g1070_fails_gracefully() {
        let registry = build_registry(&AnalysisParams::default());
        let ctx = full_context();
        let outcomes = registry.run(&["g1070".to_owned()], &ctx);
        assert!(matches!(
            &outcomes[0],
            MeasureOutcome::Failed { error, .. } if error.contains("not configured")
        ));
    }

    #[test]
    fn g1070_reads_loss_from_the_records() {
        let params = AnalysisParams {
            g1070: Some(g1070_fixture()),
            ..Default::default()
        };
        let registry = build_registry(&params);

        let mut ctx = full_context();
        let lossless = registry.run(&["g1070".to_owned()], &ctx);
        let v_lossless = match &lossless[0].as_computed().unwrap().data {
            crate::metrics::MetricData::Value(v) => *v,
            _ => unreachable!(),
        };

        // Knock every other packet out: PLR rises, Vq must drop.
        let records = ctx.packet_records.take().unwrap();
        ctx.packet_records = Some(records.into_iter().step_by(2).collect());
        let lossy = registry.run(&["g1070".to_owned()], &ctx);
        let v_lossy = match &lossy[0].as_computed().unwrap().data {
            crate::metrics::MetricData::Value(v) => *v,
            _ => unreachable!(),
        };
        assert!(v_lossy < v_lossless);
        assert!((1.0..=5.0).contains(&v_lossy));
    }

    #[test]
    fn run_is_deterministic() {
        let params = AnalysisParams {
            g1070: Some(g1070_fixture()),
            ..Default::default()
        };
        let registry = build_registry(&params);
        let ctx = full_context();
        let selected: Vec<String> = registry.all_names().iter().map(|s| s.to_string()).collect();
        assert_eq!(registry.run(&selected, &ctx), registry.run(&selected, &ctx));
    }
}
