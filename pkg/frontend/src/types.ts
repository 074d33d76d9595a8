export interface RatingTask {
  item_id: string;
  question: string;
  answer: string;
  passage_title: string;
  passage_text: string;
  passage_url: string;
  system: string;
  question_id: string;
}

export interface Progress {
  items: number;
  target_ratings: number;
  completed: number;
}

export interface RatingPayload {
  rater: string;
  item_id: string;
  interpretable: boolean;
  supported: boolean;
}
