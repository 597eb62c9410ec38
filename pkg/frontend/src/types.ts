import { z } from 'zod';

/** CSS visibility values the snapshot schema accepts, in index order. */
export const VISIBILITY_VALUES = ['hidden', 'visible', 'collapse', 'inherit', 'initial', 'unset'] as const;

export type Visibility = (typeof VISIBILITY_VALUES)[number];

export interface SnapshotNode {
  id: number;
  parent: number; // -1 for the root
  tag: string;
  bbox: { x: number; y: number; w: number; h: number };
  num_bitmap_images: number;
  num_vector_images: number;
  font_size: number;
  font_weight: number;
  visibility: Visibility;
  is_active: boolean;
  label?: string;
}

export interface Snapshot {
  version: 1;
  url: string;
  region: string;
  nodes: SnapshotNode[];
}

/** Schema version 1, mirroring the Python-side parser's constraints. */
export const snapshotNodeSchema = z.object({
  id: z.number().int().nonnegative(),
  parent: z.number().int().gte(-1),
  tag: z.string().min(1),
  bbox: z.object({
    x: z.number().finite(),
    y: z.number().finite(),
    w: z.number().finite().nonnegative(),
    h: z.number().finite().nonnegative(),
  }),
  num_bitmap_images: z.number().int().nonnegative(),
  num_vector_images: z.number().int().nonnegative(),
  font_size: z.number().finite(),
  font_weight: z.number().finite().gte(100).lte(900),
  visibility: z.enum(VISIBILITY_VALUES),
  is_active: z.boolean(),
  label: z.string().optional(),
});

export const snapshotSchema = z
  .object({
    version: z.literal(1),
    url: z.string(),
    region: z.string(),
    nodes: z.array(snapshotNodeSchema).min(1),
  })
  .superRefine((doc, ctx) => {
    doc.nodes.forEach((node, i) => {
      if (node.id !== i) {
        ctx.addIssue({ code: z.ZodIssueCode.custom, message: `node ${i}: id must equal array position` });
      }
      if (i === 0 ? node.parent !== -1 : node.parent < 0 || node.parent >= i) {
        ctx.addIssue({ code: z.ZodIssueCode.custom, message: `node ${i}: parent must be -1 for the root, else < id` });
      }
    });
  });

export interface CaptureOptions {
  /** Attribute carrying a node's class label (the annotation tool's custom attribute). */
  labelAttribute?: string;
  /** Region tag copied into the snapshot (e.g. a country code). */
  region?: string;
  /** Include elements whose computed visibility hides them (default true). */
  includeInvisible?: boolean;
  /** Snapshot url field; defaults to the document location when available. */
  url?: string;
}

export const DEFAULT_LABEL_ATTRIBUTE = 'data-tree-label';
